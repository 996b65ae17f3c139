#include "coviz/pipeline.hpp"

#include <charconv>
#include <numeric>
#include <sstream>

namespace coviz
{
    namespace
    {
        const char* const kSummaryMethods[] = {"last-state", "qdiff-second", "qdiff-worst", "frequency"};

        std::vector<double> parseWeightList(const std::string& text)
        {
            std::vector<double> out;
            std::stringstream ss(text);
            std::string item;
            while (std::getline(ss, item, ','))
            {
                const auto first = item.find_first_not_of(" \t");
                const auto last = item.find_last_not_of(" \t");
                if (first == std::string::npos)
                    throw ConfigError("empty entry in weights '" + text + "'");
                const std::string token = item.substr(first, last - first + 1);
                double v = 0.0;
                const auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), v);
                if (ec != std::errc{} || ptr != token.data() + token.size())
                    throw ConfigError("bad weight '" + token + "'");
                out.push_back(v);
            }
            return out;
        }

        void removeAgentOutputs(const RunLayout& layout, const std::string& agent)
        {
            std::filesystem::remove_all(layout.tracesDir(agent));
            std::filesystem::remove(layout.pairsFile(agent));
            std::filesystem::remove(layout.diagnosticsFile(agent));
            for (const char* method : kSummaryMethods)
            {
                std::filesystem::remove(layout.summaryFile(agent, method));
                std::filesystem::remove_all(layout.payloadDir(agent, method));
                std::filesystem::remove_all(layout.renderDir(agent, method));
            }
        }

        ImportanceMethod parseMethod(const SummarizeRequest& request)
        {
            const auto method = ImportanceMethod::parse(request.method, request.seed);
            if (!method)
                throw ConfigError("unknown summary method '" + request.method + "'");
            return *method;
        }

        std::string entryName(std::size_t i)
        {
            char buf[32];
            std::snprintf(buf, sizeof buf, "entry_%02zu", i);
            return buf;
        }
    }

    AgentSpec resolveAgentSpec(const std::string& profile, const std::optional<std::string>& weights,
                               const std::optional<std::string>& id)
    {
        AgentSpec spec;
        if (profile == "custom")
        {
            if (!weights)
                throw ConfigError("profile 'custom' needs --weights cl,hs,rml,col");
            const auto w = parseWeightList(*weights);
            if (w.size() != 4)
                throw ConfigError("--weights needs exactly 4 values (cl,hs,rml,col)");
            spec.profile = "custom";
            spec.weights = RewardWeights{w[0], w[1], w[2], w[3]};
            spec.id = id.value_or("custom");
        }
        else
        {
            const auto found = findProfile(profile);
            if (!found)
                throw ConfigError("unknown profile '" + profile + "' (expected agent1, agent2, agent3 or custom)");
            if (weights)
                throw ConfigError("--weights only applies to profile 'custom'");
            spec.profile = found->name;
            spec.weights = found->weights;
            spec.id = id.value_or(found->name);
        }
        if (spec.id.empty() || spec.id.find_first_of("/\\. ") != std::string::npos)
            throw ConfigError("agent id '" + spec.id + "' must be a plain name");
        return spec;
    }

    RunConfig resolveRunConfig(const RunLayout& layout, const std::optional<std::filesystem::path>& configPath)
    {
        if (configPath)
            return loadRunConfig(*configPath);
        if (std::filesystem::exists(layout.manifest()))
        {
            try
            {
                return runConfigFromJson(json::parse(readTextFile(layout.manifest())).at("config"));
            }
            catch (const json::exception& e)
            {
                throw DataError("manifest config unreadable: " + std::string(e.what()));
            }
        }
        RunConfig config;
        config.validate();
        return config;
    }

    AgentModel trainAgentArtifact(const RunLayout& layout, const RunConfig& config, const AgentSpec& spec)
    {
        config.validate();
        EnvConfig env = config.env;
        env.weights = spec.weights;
        env.validate();

        AgentModel model = train(env, config.train, spec.id, spec.profile);
        removeAgentOutputs(layout, spec.id);
        saveAgent(model, layout.agentFile(spec.id));
        return model;
    }

    AgentModel loadAgentArtifact(const RunLayout& layout, const std::string& agent)
    {
        const auto path = layout.agentFile(agent);
        if (!std::filesystem::exists(path))
            throw NotFoundError("no agent '" + agent + "' under " + layout.agentsDir().string());
        return loadAgent(path);
    }

    std::vector<Trace> traceAgentArtifact(const RunLayout& layout, const RunConfig& config, const std::string& agent)
    {
        config.validate();
        const AgentModel model = loadAgentArtifact(layout, agent);
        const HighwayEnv env(model.env());
        auto traces = collectTraces(model, env, config.coviz.nsim, config.coviz.base_seed);
        removeAgentOutputs(layout, agent);
        for (const Trace& t : traces)
        {
            writeTrace(layout.traceFile(agent, t.trace_id), t);
        }
        return traces;
    }

    std::vector<CFPair> pairAgentArtifact(const RunLayout& layout, const RunConfig& config, const std::string& agent)
    {
        config.validate();
        const AgentModel model = loadAgentArtifact(layout, agent);
        const HighwayEnv env(model.env());
        std::vector<Trace> traces;
        if (std::filesystem::is_directory(layout.tracesDir(agent)))
            traces = readTraces(layout, agent);
        else
            traces = traceAgentArtifact(layout, config, agent);
        auto pairs = generateCFPairs(model, env, traces, config.coviz);
        writePairs(layout.pairsFile(agent), pairs);
        return pairs;
    }

    std::vector<CFPair> ensurePairs(const RunLayout& layout, const RunConfig& config, const std::string& agent)
    {
        if (std::filesystem::exists(layout.pairsFile(agent)))
        {
            const auto traces = readTraces(layout, agent);
            return readPairs(layout.pairsFile(agent), traces);
        }
        return pairAgentArtifact(layout, config, agent);
    }

    std::string provenanceHash(const RunLayout& layout, const std::string& agent)
    {
        return sha256Hex(fileSha256(layout.agentFile(agent)) + fileSha256(layout.pairsFile(agent)));
    }

    json rejoinDiagnostics(const AgentModel& model, std::span<const CFPair> pairs, int n, int overlap)
    {
        const HighwayEnv env(model.env());
        const Summary qdiff = topImpTraj(model, env, pairs, ImportanceMethod::qdiffSecondBest(), n, overlap);
        const Summary qdiffWorst = topImpTraj(model, env, pairs, ImportanceMethod::qdiffWorst(), n, overlap);
        const Summary last = topImpTraj(model, env, pairs, ImportanceMethod::lastState(), n, overlap);
        std::size_t degenerate = 0;
        for (const CFPair& p : pairs)
        {
            degenerate += p.degenerate ? 1 : 0;
        }
        // Same comparison without the summary's size and overlap limits.
        auto topDecile = [&](auto score) {
            std::vector<std::size_t> order(pairs.size());
            std::iota(order.begin(), order.end(), std::size_t{0});
            std::stable_sort(order.begin(), order.end(),
                             [&](std::size_t a, std::size_t b) { return score(pairs[a]) > score(pairs[b]); });
            order.resize((pairs.size() + 9) / 10);
            std::vector<CFPair> top;
            for (std::size_t i : order)
                top.push_back(pairs[i]);
            return rejoinFraction(top);
        };
        const double q = rejoinFraction(qdiff);
        const double l = rejoinFraction(last);
        const double qTop = topDecile([](const CFPair& p) { return p.importance.qdiff_second_best.value_or(0.0); });
        const double lTop = topDecile([](const CFPair& p) { return p.importance.last_state.value_or(0.0); });
        return json{{"agent_id", model.id()},
                    {"n", n},
                    {"overlap", overlap},
                    {"pairs", pairs.size()},
                    {"degenerate_pairs", degenerate},
                    {"rejoin_fraction",
                     {{"all_pairs", rejoinFraction(pairs)},
                      {"qdiff-second", q},
                      {"qdiff-worst", rejoinFraction(qdiffWorst)},
                      {"last-state", l}}},
                    {"top_decile_rejoin_fraction", {{"qdiff-second", qTop}, {"last-state", lTop}}},
                    {"qdiff_at_least_last_state", q >= l}};
    }

    void validateSummarizeRequest(const SummarizeRequest& request)
    {
        if (request.n < 1)
            throw ConfigError("n must be >= 1");
        if (request.overlap < 0)
            throw ConfigError("overlap must be >= 0");
        parseMethod(request);
    }

    Summary buildSummary(const AgentModel& model, std::span<const CFPair> pairs, const SummarizeRequest& request,
                         const std::string& provenance)
    {
        validateSummarizeRequest(request);
        const HighwayEnv env(model.env());
        Summary summary = topImpTraj(model, env, pairs, parseMethod(request), request.n, request.overlap);
        summary.manifest_hash = provenance;
        return summary;
    }

    std::vector<CordPayload> summaryPayloads(const AgentModel& model, const Summary& summary)
    {
        std::vector<CordPayload> out;
        out.reserve(summary.entries.size());
        for (const SummaryEntry& e : summary.entries)
        {
            out.push_back(buildCordPayload(model, e.pair, e.score, summary.method.name()));
        }
        return out;
    }

    SummarizeResult summarizeAgentArtifact(const RunLayout& layout, const RunConfig& config,
                                           const SummarizeRequest& request)
    {
        validateSummarizeRequest(request);
        const AgentModel model = loadAgentArtifact(layout, request.agent);
        const auto pairs = ensurePairs(layout, config, request.agent);
        if (pairs.empty())
            throw DataError("agent '" + request.agent + "' has no counterfactual pairs");

        SummarizeResult result;
        result.summary = buildSummary(model, pairs, request, provenanceHash(layout, request.agent));
        checkSummaryInvariants(result.summary);
        result.diagnostics = rejoinDiagnostics(model, pairs, request.n, request.overlap);
        result.payloads = summaryPayloads(model, result.summary);

        const std::string method = result.summary.method.name();
        writeTextFile(layout.summaryFile(request.agent, method), summaryToJson(result.summary).dump(1) + "\n");
        writeTextFile(layout.diagnosticsFile(request.agent), result.diagnostics.dump(1) + "\n");

        std::filesystem::remove_all(layout.payloadDir(request.agent, method));
        std::filesystem::remove_all(layout.renderDir(request.agent, method));
        for (std::size_t i = 0; i < result.payloads.size(); ++i)
        {
            const CordPayload& payload = result.payloads[i];
            writeTextFile(layout.payloadDir(request.agent, method) / (entryName(i) + ".json"),
                          toJson(payload).dump(1) + "\n");
            if (request.render)
                renderSVG(payload.frames, payload.bars, layout.renderDir(request.agent, method) / entryName(i));
        }
        return result;
    }

    std::vector<std::filesystem::path> renderSummaryArtifact(const RunLayout& layout, const RunConfig& config,
                                                             const std::string& agent, const std::string& method)
    {
        const auto parsed = ImportanceMethod::parse(method);
        if (!parsed)
            throw ConfigError("unknown summary method '" + method + "'");
        const std::string name = parsed->name();
        const auto summaryPath = layout.summaryFile(agent, name);
        if (!std::filesystem::exists(summaryPath))
            throw NotFoundError("no " + name + " summary for agent '" + agent + "'; run summarize first");

        const AgentModel model = loadAgentArtifact(layout, agent);
        const auto pairs = ensurePairs(layout, config, agent);
        json stored;
        try
        {
            stored = json::parse(readTextFile(summaryPath));
        }
        catch (const json::exception& e)
        {
            throw DataError("malformed summary " + summaryPath.string() + ": " + e.what());
        }

        std::vector<std::filesystem::path> written;
        std::filesystem::remove_all(layout.renderDir(agent, name));
        std::size_t i = 0;
        for (const json& entry : stored.at("entries"))
        {
            const auto idx = entry.at("pair_index").get<std::size_t>();
            if (idx >= pairs.size() || pairs[idx].trace_id != entry.at("trace_id").get<std::string>() ||
                pairs[idx].origin_index != entry.at("origin_index").get<int>())
            {
                throw DataError("summary entry " + std::to_string(i) + " does not match the stored pairs");
            }
            const json& score = entry.at("score");
            const CordPayload payload = buildCordPayload(
                model, pairs[idx], score.is_null() ? std::optional<double>{} : score.get<double>(), name);
            auto files = renderSVG(payload.frames, payload.bars, layout.renderDir(agent, name) / entryName(i));
            written.insert(written.end(), files.begin(), files.end());
            ++i;
        }
        return written;
    }

    CordPayload explainOrigin(const AgentModel& model, const Trace& trace, const ExplainRequest& request,
                              const CfMethod& method)
    {
        if (request.k < 1)
            throw ConfigError("k must be >= 1");
        if (request.origin < 0 || static_cast<std::size_t>(request.origin) >= trace.steps.size())
        {
            throw NotFoundError("trace " + trace.trace_id + " has no step " + std::to_string(request.origin) +
                                " (length " + std::to_string(trace.steps.size()) + ")");
        }
        if (!isEligibleOrigin(trace, request.origin, request.k))
        {
            const auto remaining = trace.steps.size() - static_cast<std::size_t>(request.origin) - 1;
            throw IneligibleOriginError("step " + std::to_string(request.origin) + " of trace " + trace.trace_id +
                                        " is followed by " + std::to_string(remaining) + " steps; k=" +
                                        std::to_string(request.k) + " needs " + std::to_string(request.k));
        }
        const HighwayEnv env(model.env());
        const TraceStep& step = trace.steps[static_cast<std::size_t>(request.origin)];
        std::optional<Action> automatic;
        if (!request.foil || method.kind != CfMethod::Kind::UserChosen || method.user_action != step.action)
            automatic = selectCFAction(step.q, step.action, method);
        // An explicit foil that matches the automatic choice is the precomputed pair.
        const Action foil = request.foil.value_or(automatic.value_or(Action::Idle));
        const CfMethod label = foil == automatic ? method : CfMethod::userChosen(foil);
        const CFPair pair = makePair(model, env, trace, request.origin, request.k, foil, label);
        return buildCordPayload(model, pair, pair.importance.last_state, "last-state");
    }

    CordPayload explainArtifact(const RunLayout& layout, const RunConfig& config, const ExplainRequest& request)
    {
        const AgentModel model = loadAgentArtifact(layout, request.agent);
        const auto path = layout.traceFile(request.agent, request.trace_id);
        if (!std::filesystem::exists(path))
            throw NotFoundError("no trace '" + request.trace_id + "' for agent '" + request.agent + "'");
        return explainOrigin(model, readTrace(path), request, config.coviz.cf_method);
    }

    void runFullPipeline(const RunLayout& layout, const RunConfig& config, bool render)
    {
        config.validate();
        SummarizeRequest base;
        base.method = config.summary.method;
        base.n = config.summary.n;
        base.overlap = config.summary.overlap;
        base.seed = config.summary.seed;
        base.render = render;
        validateSummarizeRequest(base);

        for (const std::string& id : studyAgentIds())
        {
            trainAgentArtifact(layout, config, resolveAgentSpec(id));
            traceAgentArtifact(layout, config, id);
            pairAgentArtifact(layout, config, id);
            SummarizeRequest request = base;
            request.agent = id;
            summarizeAgentArtifact(layout, config, request);
        }
        writeManifest(layout, config);
    }
}
