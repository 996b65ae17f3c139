#pragma once

#include "coviz/artifacts.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace coviz
{
    class NotFoundError : public DataError
    {
    public:
        using DataError::DataError;
    };

    // Origin without k following fact steps.
    class IneligibleOriginError : public DataError
    {
    public:
        using DataError::DataError;
    };

    struct AgentSpec
    {
        std::string id;
        std::string profile;  // "agent1".."agent3" or "custom"
        RewardWeights weights;
    };

    // `profile` is a study profile name or "custom"; custom needs "cl,hs,rml,col" weights.
    AgentSpec resolveAgentSpec(const std::string& profile, const std::optional<std::string>& weights = {},
                               const std::optional<std::string>& id = {});

    // Explicit file first, then the config stored in the run manifest, then defaults.
    RunConfig resolveRunConfig(const RunLayout& layout, const std::optional<std::filesystem::path>& config_path);

    AgentModel trainAgentArtifact(const RunLayout& layout, const RunConfig& config, const AgentSpec& spec);

    AgentModel loadAgentArtifact(const RunLayout& layout, const std::string& agent);

    std::vector<Trace> traceAgentArtifact(const RunLayout& layout, const RunConfig& config, const std::string& agent);

    std::vector<CFPair> pairAgentArtifact(const RunLayout& layout, const RunConfig& config, const std::string& agent);

    // Stored pairs when present, otherwise generated (and written) from the traces.
    std::vector<CFPair> ensurePairs(const RunLayout& layout, const RunConfig& config, const std::string& agent);

    // Hash tying a summary to the checkpoint and pair set it was computed from.
    std::string provenanceHash(const RunLayout& layout, const std::string& agent);

    // Rejoin fractions of the QDiff and Last-State selections over the same pairs.
    json rejoinDiagnostics(const AgentModel& model, std::span<const CFPair> pairs, int n, int overlap);

    struct SummarizeRequest
    {
        std::string agent;
        std::string method = "last-state";
        int n = 4;
        int overlap = 5;
        std::uint64_t seed = 0;
        bool render = true;
    };

    struct SummarizeResult
    {
        Summary summary;
        json diagnostics;
        std::vector<CordPayload> payloads;
    };

    void validateSummarizeRequest(const SummarizeRequest& request);

    Summary buildSummary(const AgentModel& model, std::span<const CFPair> pairs, const SummarizeRequest& request,
                         const std::string& provenance);

    std::vector<CordPayload> summaryPayloads(const AgentModel& model, const Summary& summary);

    SummarizeResult summarizeAgentArtifact(const RunLayout& layout, const RunConfig& config,
                                           const SummarizeRequest& request);

    // Rebuilds the SVGs of a stored summary; returns the written files.
    std::vector<std::filesystem::path> renderSummaryArtifact(const RunLayout& layout, const RunConfig& config,
                                                             const std::string& agent, const std::string& method);

    struct ExplainRequest
    {
        std::string agent;
        std::string trace_id;
        int origin = 0;
        std::optional<Action> foil;  // empty: the configured counterfactual method
        int k = 7;
    };

    // Throws InvalidFoilError for foil == fact, NotFoundError for an unknown
    // trace or step, IneligibleOriginError for a step too close to the end.
    CordPayload explainOrigin(const AgentModel& model, const Trace& trace, const ExplainRequest& request,
                              const CfMethod& method);
    CordPayload explainArtifact(const RunLayout& layout, const RunConfig& config, const ExplainRequest& request);

    inline const std::vector<std::string>& studyAgentIds()
    {
        static const std::vector<std::string> ids{"agent1", "agent2", "agent3"};
        return ids;
    }

    // train -> trace -> pairs -> summarize for each study agent, then the manifest.
    void runFullPipeline(const RunLayout& layout, const RunConfig& config, bool render = true);
}
