#pragma once

#include "coviz/coviz_engine.hpp"
#include "coviz/explain_render.hpp"
#include "coviz/run_config.hpp"
#include "coviz/summary_select.hpp"

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace coviz
{
    // Missing or inconsistent run artifacts.
    class DataError : public std::runtime_error
    {
    public:
        using std::runtime_error::runtime_error;
    };

    inline constexpr std::string_view kToolVersion = "0.1.0";

    std::string sha256Hex(std::string_view bytes);
    std::string fileSha256(const std::filesystem::path& path);

    /// Directory layout of one run:
    ///   manifest.json
    ///   agents/<agent>.json
    ///   traces/<agent>/<trace_id>.jsonl
    ///   pairs/<agent>.jsonl
    ///   summaries/<agent>-<method>.json, summaries/<agent>-diagnostics.json
    ///   payloads/<agent>-<method>/entry_<n>.json
    ///   render/<agent>-<method>/entry_<n>/frame_XX.svg, bars.svg
    class RunLayout
    {
    public:
        explicit RunLayout(std::filesystem::path root) : root_(std::move(root)) {}

        const std::filesystem::path& root() const noexcept { return root_; }
        std::filesystem::path manifest() const { return root_ / "manifest.json"; }
        std::filesystem::path agentsDir() const { return root_ / "agents"; }
        std::filesystem::path agentFile(const std::string& agent) const { return agentsDir() / (agent + ".json"); }
        std::filesystem::path tracesDir(const std::string& agent) const { return root_ / "traces" / agent; }
        std::filesystem::path traceFile(const std::string& agent, const std::string& traceId) const
        {
            return tracesDir(agent) / (traceId + ".jsonl");
        }
        std::filesystem::path pairsFile(const std::string& agent) const
        {
            return root_ / "pairs" / (agent + ".jsonl");
        }
        std::filesystem::path summaryFile(const std::string& agent, const std::string& method) const
        {
            return root_ / "summaries" / (agent + "-" + method + ".json");
        }
        std::filesystem::path diagnosticsFile(const std::string& agent) const
        {
            return root_ / "summaries" / (agent + "-diagnostics.json");
        }
        std::filesystem::path payloadDir(const std::string& agent, const std::string& method) const
        {
            return root_ / "payloads" / (agent + "-" + method);
        }
        std::filesystem::path renderDir(const std::string& agent, const std::string& method) const
        {
            return root_ / "render" / (agent + "-" + method);
        }

        std::vector<std::string> agentIds() const;

    private:
        std::filesystem::path root_;
    };

    void writeTextFile(const std::filesystem::path& path, std::string_view text);
    std::string readTextFile(const std::filesystem::path& path);

    // Trace files: one header line, then one line per step.
    std::string traceToJsonl(const Trace& trace);
    Trace traceFromJsonl(std::string_view text, const std::string& source = "<trace>");
    void writeTrace(const std::filesystem::path& path, const Trace& trace);
    Trace readTrace(const std::filesystem::path& path);
    std::vector<Trace> readTraces(const RunLayout& layout, const std::string& agent);

    json traceStepJson(const TraceStep& step, const Trace& trace, int k);

    // Pair lines reference their trace by id; fact states and the origin are
    // rebuilt from the trace on load.
    json pairToJson(const CFPair& pair);
    void writePairs(const std::filesystem::path& path, std::span<const CFPair> pairs);
    std::vector<CFPair> readPairs(const std::filesystem::path& path, std::span<const Trace> traces);

    json summaryToJson(const Summary& summary);

    RunConfig runConfigFromJson(const json& j);

    // Rewrites manifest.json from the files currently under the run root.
    json buildManifest(const RunLayout& layout, const RunConfig& config);
    void writeManifest(const RunLayout& layout, const RunConfig& config);
    // Throws DataError when a listed artifact is missing or its hash changed.
    void verifyManifest(const RunLayout& layout);
}
