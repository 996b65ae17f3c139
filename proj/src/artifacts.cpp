#include "coviz/artifacts.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <fstream>
#include <memory>
#include <sstream>

namespace coviz
{
    std::string sha256Hex(std::string_view bytes)
    {
        std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), &EVP_MD_CTX_free);
        unsigned char digest[EVP_MAX_MD_SIZE];
        unsigned int length = 0;
        if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1 ||
            EVP_DigestUpdate(ctx.get(), bytes.data(), bytes.size()) != 1 ||
            EVP_DigestFinal_ex(ctx.get(), digest, &length) != 1)
        {
            throw std::runtime_error("sha256 failed");
        }
        static constexpr char kHex[] = "0123456789abcdef";
        std::string out;
        out.reserve(length * 2);
        for (unsigned int i = 0; i < length; ++i)
        {
            out.push_back(kHex[digest[i] >> 4]);
            out.push_back(kHex[digest[i] & 0xF]);
        }
        return out;
    }

    std::string fileSha256(const std::filesystem::path& path)
    {
        return sha256Hex(readTextFile(path));
    }

    std::vector<std::string> RunLayout::agentIds() const
    {
        std::vector<std::string> ids;
        if (!std::filesystem::is_directory(agentsDir()))
            return ids;
        for (const auto& entry : std::filesystem::directory_iterator(agentsDir()))
        {
            if (entry.is_regular_file() && entry.path().extension() == ".json")
                ids.push_back(entry.path().stem().string());
        }
        std::sort(ids.begin(), ids.end());
        return ids;
    }

    void writeTextFile(const std::filesystem::path& path, std::string_view text)
    {
        if (path.has_parent_path())
            std::filesystem::create_directories(path.parent_path());
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        if (!out)
            throw std::runtime_error("cannot write " + path.string());
        out.write(text.data(), static_cast<std::streamsize>(text.size()));
        if (!out)
            throw std::runtime_error("failed writing " + path.string());
    }

    std::string readTextFile(const std::filesystem::path& path)
    {
        std::ifstream in(path, std::ios::binary);
        if (!in)
            throw DataError("cannot read " + path.string());
        std::ostringstream buf;
        buf << in.rdbuf();
        return buf.str();
    }

    std::string traceToJsonl(const Trace& trace)
    {
        std::string out;
        const json header{{"kind", "trace"},
                          {"trace_id", trace.trace_id},
                          {"seed", trace.seed},
                          {"agent_id", trace.agent_id},
                          {"length", trace.steps.size()},
                          {"terminal_cause", terminalCauseName(trace.cause)},
                          {"final_state", trace.final_state}};
        out += canonicalDump(header);
        out += '\n';
        for (const TraceStep& s : trace.steps)
        {
            const json line{{"kind", "step"},
                            {"index", s.index},
                            {"snapshot", s.snapshot},
                            {"observation", s.obs},
                            {"action", ordinal(s.action)},
                            {"reward", s.reward},
                            {"q", decomposedQToJson(s.q)},
                            {"terminated", s.terminated}};
            out += canonicalDump(line);
            out += '\n';
        }
        return out;
    }

    Trace traceFromJsonl(std::string_view text, const std::string& source)
    {
        Trace trace;
        std::size_t lineNo = 0;
        bool haveHeader = false;
        std::size_t declared = 0;
        try
        {
            while (!text.empty())
            {
                const auto eol = text.find('\n');
                const std::string_view line = text.substr(0, eol);
                text = eol == std::string_view::npos ? std::string_view{} : text.substr(eol + 1);
                ++lineNo;
                if (line.empty())
                    continue;
                const json j = json::parse(line);
                const std::string kind = j.at("kind").get<std::string>();
                if (kind == "trace")
                {
                    trace.trace_id = j.at("trace_id").get<std::string>();
                    trace.seed = j.at("seed").get<std::uint64_t>();
                    trace.agent_id = j.at("agent_id").get<std::string>();
                    declared = j.at("length").get<std::size_t>();
                    const auto cause = parseTerminalCause(j.at("terminal_cause").get<std::string>());
                    if (!cause)
                        throw DataError("unknown terminal cause");
                    trace.cause = *cause;
                    trace.final_state = j.at("final_state").get<SimState>();
                    haveHeader = true;
                }
                else if (kind == "step")
                {
                    TraceStep s;
                    s.index = j.at("index").get<int>();
                    s.snapshot = j.at("snapshot").get<SimState>();
                    s.obs = j.at("observation").get<Observation>();
                    s.action = actionFromOrdinal(j.at("action").get<std::size_t>());
                    s.reward = j.at("reward").get<RewardVector>();
                    s.q = decomposedQFromJson(j.at("q"));
                    s.terminated = j.at("terminated").get<bool>();
                    if (s.index != static_cast<int>(trace.steps.size()))
                        throw DataError("step index out of order");
                    trace.steps.push_back(std::move(s));
                }
                else
                {
                    throw DataError("unknown line kind '" + kind + "'");
                }
            }
        }
        catch (const std::exception& e)
        {
            throw DataError(source + ":" + std::to_string(lineNo) + ": " + e.what());
        }
        if (!haveHeader)
            throw DataError(source + ": missing trace header");
        if (declared != trace.steps.size())
            throw DataError(source + ": header declares " + std::to_string(declared) + " steps, found " +
                            std::to_string(trace.steps.size()));
        return trace;
    }

    void writeTrace(const std::filesystem::path& path, const Trace& trace)
    {
        writeTextFile(path, traceToJsonl(trace));
    }

    Trace readTrace(const std::filesystem::path& path)
    {
        return traceFromJsonl(readTextFile(path), path.string());
    }

    std::vector<Trace> readTraces(const RunLayout& layout, const std::string& agent)
    {
        const auto dir = layout.tracesDir(agent);
        if (!std::filesystem::is_directory(dir))
            throw DataError("no traces for agent '" + agent + "' under " + dir.string());
        std::vector<std::filesystem::path> files;
        for (const auto& entry : std::filesystem::directory_iterator(dir))
        {
            if (entry.is_regular_file() && entry.path().extension() == ".jsonl")
                files.push_back(entry.path());
        }
        std::sort(files.begin(), files.end());
        std::vector<Trace> traces;
        traces.reserve(files.size());
        for (const auto& f : files)
        {
            traces.push_back(readTrace(f));
        }
        return traces;
    }

    json traceStepJson(const TraceStep& step, const Trace& trace, int k)
    {
        return json{{"trace_id", trace.trace_id},
                    {"agent_id", trace.agent_id},
                    {"index", step.index},
                    {"trace_length", trace.steps.size()},
                    {"snapshot", step.snapshot},
                    {"observation", step.obs},
                    {"action", actionName(step.action)},
                    {"action_ordinal", ordinal(step.action)},
                    {"reward", step.reward},
                    {"q", decomposedQToJson(step.q)},
                    {"ranked_actions",
                     [&] {
                         json names = json::array();
                         for (Action a : rankedActions(step.q))
                             names.push_back(actionName(a));
                         return names;
                     }()},
                    {"terminated", step.terminated},
                    {"k", k},
                    {"eligible", isEligibleOrigin(trace, step.index, k)}};
    }

    json pairToJson(const CFPair& p)
    {
        auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
        return json{{"trace_id", p.trace_id},
                    {"agent_id", p.agent_id},
                    {"origin_index", p.origin_index},
                    {"k", p.k()},
                    {"fact_action", ordinal(p.fact_action)},
                    {"foil_action", ordinal(p.foil_action)},
                    {"cf_method", p.cf_method.name()},
                    {"foil", p.foil},
                    {"foil_terminal", p.foil_terminal ? json(terminalCauseName(*p.foil_terminal)) : json(nullptr)},
                    {"degenerate", p.degenerate},
                    {"importance",
                     {{"last_state", opt(p.importance.last_state)},
                      {"qdiff_second_best", opt(p.importance.qdiff_second_best)},
                      {"qdiff_worst", opt(p.importance.qdiff_worst)}}}};
    }

    void writePairs(const std::filesystem::path& path, std::span<const CFPair> pairs)
    {
        std::string out;
        for (const CFPair& p : pairs)
        {
            out += canonicalDump(pairToJson(p));
            out += '\n';
        }
        writeTextFile(path, out);
    }

    std::vector<CFPair> readPairs(const std::filesystem::path& path, std::span<const Trace> traces)
    {
        std::map<std::string, const Trace*> byId;
        for (const Trace& t : traces)
        {
            byId[t.trace_id] = &t;
        }
        const std::string text = readTextFile(path);
        std::vector<CFPair> pairs;
        std::istringstream lines(text);
        std::string line;
        std::size_t lineNo = 0;
        auto opt = [](const json& v) { return v.is_null() ? std::optional<double>{} : v.get<double>(); };
        while (std::getline(lines, line))
        {
            ++lineNo;
            if (line.empty())
                continue;
            try
            {
                const json j = json::parse(line);
                CFPair p;
                p.trace_id = j.at("trace_id").get<std::string>();
                p.agent_id = j.at("agent_id").get<std::string>();
                p.origin_index = j.at("origin_index").get<int>();
                const int k = j.at("k").get<int>();
                p.fact_action = actionFromOrdinal(j.at("fact_action").get<std::size_t>());
                p.foil_action = actionFromOrdinal(j.at("foil_action").get<std::size_t>());
                const auto method = CfMethod::parse(j.at("cf_method").get<std::string>());
                if (!method)
                    throw DataError("unknown cf_method");
                p.cf_method = *method;
                p.foil = j.at("foil").get<std::vector<SimState>>();
                const json& term = j.at("foil_terminal");
                if (!term.is_null())
                    p.foil_terminal = parseTerminalCause(term.get<std::string>());
                p.degenerate = j.at("degenerate").get<bool>();
                const json& imp = j.at("importance");
                p.importance.last_state = opt(imp.at("last_state"));
                p.importance.qdiff_second_best = opt(imp.at("qdiff_second_best"));
                p.importance.qdiff_worst = opt(imp.at("qdiff_worst"));

                const auto it = byId.find(p.trace_id);
                if (it == byId.end())
                    throw DataError("pair references unknown trace " + p.trace_id);
                const Trace& trace = *it->second;
                if (!isEligibleOrigin(trace, p.origin_index, k))
                    throw DataError("pair origin not eligible in trace " + p.trace_id);
                const TraceStep& step = trace.steps[static_cast<std::size_t>(p.origin_index)];
                if (step.action != p.fact_action)
                    throw DataError("pair fact action disagrees with trace " + p.trace_id);
                p.origin = step.snapshot;
                p.origin_q = step.q;
                for (int jx = 1; jx <= k; ++jx)
                {
                    p.fact.push_back(trace.stateAt(static_cast<std::size_t>(p.origin_index + jx)));
                }
                pairs.push_back(std::move(p));
            }
            catch (const DataError& e)
            {
                throw DataError(path.string() + ":" + std::to_string(lineNo) + ": " + e.what());
            }
            catch (const std::exception& e)
            {
                throw DataError(path.string() + ":" + std::to_string(lineNo) + ": " + e.what());
            }
        }
        return pairs;
    }

    json summaryToJson(const Summary& s)
    {
        json entries = json::array();
        for (std::size_t i = 0; i < s.entries.size(); ++i)
        {
            const auto& e = s.entries[i];
            entries.push_back(json{{"rank", i},
                                   {"pair_index", e.pair_index},
                                   {"trace_id", e.pair.trace_id},
                                   {"origin_index", e.pair.origin_index},
                                   {"k", e.pair.k()},
                                   {"score", e.score ? json(*e.score) : json(nullptr)},
                                   {"fact_action", actionName(e.pair.fact_action)},
                                   {"foil_action", actionName(e.pair.foil_action)},
                                   {"foil_terminal", e.pair.foil_terminal
                                                         ? json(terminalCauseName(*e.pair.foil_terminal))
                                                         : json(nullptr)},
                                   {"degenerate", e.pair.degenerate},
                                   {"rejoins", foilRejoins(e.pair)}});
        }
        return json{{"agent_id", s.agent_id},
                    {"method", s.method.name()},
                    {"seed", s.method.seed},
                    {"n", s.n},
                    {"overlap", s.overlap_limit},
                    {"manifest_hash", s.manifest_hash},
                    {"entries", std::move(entries)},
                    {"diagnostics", {{"rejoin_fraction", rejoinFraction(s)}}}};
    }

    RunConfig runConfigFromJson(const json& j)
    {
        RunConfig c;
        c.env = j.at("env").get<EnvConfig>();
        c.train = j.at("train").get<Hyperparams>();
        const json& cv = j.at("coviz");
        c.coviz.k = cv.at("k").get<int>();
        c.coviz.nsim = cv.at("nsim").get<int>();
        const auto method = CfMethod::parse(cv.at("cf_method").get<std::string>());
        if (!method)
            throw ConfigError("unknown cf_method in stored config");
        c.coviz.cf_method = *method;
        c.coviz.base_seed = cv.at("base_seed").get<std::uint64_t>();
        const json& sm = j.at("summary");
        c.summary.method = sm.at("method").get<std::string>();
        c.summary.n = sm.at("n").get<int>();
        c.summary.overlap = sm.at("overlap").get<int>();
        c.summary.seed = sm.at("seed").get<std::uint64_t>();
        c.validate();
        return c;
    }

    json buildManifest(const RunLayout& layout, const RunConfig& config)
    {
        json artifacts = json::object();
        if (std::filesystem::is_directory(layout.root()))
        {
            std::vector<std::filesystem::path> files;
            for (const auto& entry : std::filesystem::recursive_directory_iterator(layout.root()))
            {
                if (entry.is_regular_file() && entry.path() != layout.manifest())
                    files.push_back(entry.path());
            }
            std::sort(files.begin(), files.end());
            for (const auto& f : files)
            {
                artifacts[std::filesystem::relative(f, layout.root()).generic_string()] = fileSha256(f);
            }
        }
        return json{{"tool", "coviz"},
                    {"tool_version", kToolVersion},
                    {"config", toJson(config)},
                    {"seeds",
                     {{"train", config.train.seed},
                      {"trace_base", config.coviz.base_seed},
                      {"summary", config.summary.seed}}},
                    {"artifacts", std::move(artifacts)}};
    }

    void writeManifest(const RunLayout& layout, const RunConfig& config)
    {
        writeTextFile(layout.manifest(), buildManifest(layout, config).dump(1) + "\n");
    }

    void verifyManifest(const RunLayout& layout)
    {
        json manifest;
        try
        {
            manifest = json::parse(readTextFile(layout.manifest()));
        }
        catch (const json::exception& e)
        {
            throw DataError("malformed manifest: " + std::string(e.what()));
        }
        for (const auto& [rel, hash] : manifest.at("artifacts").items())
        {
            const auto path = layout.root() / rel;
            if (!std::filesystem::exists(path))
                throw DataError("manifest lists missing artifact " + rel);
            if (fileSha256(path) != hash.get<std::string>())
                throw DataError("artifact hash mismatch: " + rel);
        }
    }
}
