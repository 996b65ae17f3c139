#include "cli.hpp"

#include "coviz/api_service.hpp"

#include <CLI11.hpp>

#include <atomic>
#include <csignal>
#include <optional>

namespace coviz::cli
{
    namespace
    {
        std::atomic<bool> g_stop{false};

        extern "C" void onSignal(int)
        {
            g_stop.store(true);
        }

        struct Common
        {
            std::string out = "run";
            std::string config;
            std::optional<std::uint64_t> seed;

            RunLayout layout() const { return RunLayout(out); }

            RunConfig resolve() const
            {
                return resolveRunConfig(layout(), config.empty() ? std::nullopt
                                                                 : std::optional<std::filesystem::path>(config));
            }
        };

        std::vector<std::string> selectAgents(const RunLayout& layout, const std::vector<std::string>& requested)
        {
            if (!requested.empty())
                return requested;
            auto ids = layout.agentIds();
            if (ids.empty())
                throw DataError("no agents under " + layout.agentsDir().string() + "; run train first");
            return ids;
        }

        // Trace ids are "<agent>-tNNNN".
        std::string agentOfTrace(const std::string& traceId)
        {
            const auto pos = traceId.rfind("-t");
            if (pos == std::string::npos || pos == 0)
                throw UsageError("cannot infer the agent of trace '" + traceId + "'; pass --agent");
            return traceId.substr(0, pos);
        }

        template <typename Fn>
        int guarded(std::ostream& err, Fn&& fn)
        {
            try
            {
                return fn();
            }
            catch (const ConfigError& e)
            {
                err << "error: " << e.what() << "\n";
                return kUsage;
            }
            catch (const UsageError& e)
            {
                err << "error: " << e.what() << "\n";
                return kUsage;
            }
            catch (const InvalidFoilError& e)
            {
                err << "error: invalid foil: " << e.what() << "\n";
                return kUsage;
            }
            catch (const IneligibleOriginError& e)
            {
                err << "error: ineligible origin: " << e.what() << "\n";
                return kData;
            }
            catch (const DataError& e)
            {
                err << "error: " << e.what() << "\n";
                return kData;
            }
            catch (const CheckpointError& e)
            {
                err << "error: " << e.what() << "\n";
                return kData;
            }
            catch (const ConsistencyError& e)
            {
                err << "error: " << e.what() << "\n";
                return kData;
            }
            catch (const std::filesystem::filesystem_error& e)
            {
                err << "error: " << e.what() << "\n";
                return kEnvironment;
            }
            catch (const std::exception& e)
            {
                err << "error: " << e.what() << "\n";
                return kEnvironment;
            }
        }
    }

    int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err)
    {
        CLI::App app{"Counterfactual outcome explanations for highway driving agents", "coviz"};
        app.require_subcommand(1);
        app.fallthrough();

        Common common;
        app.add_option("--out", common.out, "Run directory (manifest at its root)");
        app.add_option("--config", common.config, "Config file with [env] [train] [coviz] [summary] sections")
            ->check(CLI::ExistingFile);
        app.add_option("--seed", common.seed, "Seed for the command's random stream");

        // train
        auto* train = app.add_subcommand("train", "Train one decomposed-reward agent");
        std::string profile;
        std::optional<std::string> weights;
        std::optional<std::string> agentId;
        std::optional<int> episodes;
        train->add_option("--profile", profile, "agent1, agent2, agent3 or custom")->required();
        train->add_option("--weights", weights, "cl,hs,rml,col weights for --profile custom");
        train->add_option("--id", agentId, "Agent id (defaults to the profile name)");
        train->add_option("--episodes", episodes, "Training episodes");

        // trace / pairs
        std::vector<std::string> agents;
        std::optional<int> nsim;
        std::optional<int> kOpt;
        std::optional<std::string> cfMethod;
        auto* trace = app.add_subcommand("trace", "Record greedy episodes of trained agents");
        trace->add_option("--agent", agents, "Agent ids (default: every trained agent)");
        trace->add_option("--nsim", nsim, "Episodes per agent");

        auto* pairs = app.add_subcommand("pairs", "Generate fact/foil pairs from recorded traces");
        pairs->add_option("--agent", agents, "Agent ids (default: every trained agent)");
        pairs->add_option("--k", kOpt, "Fact/foil horizon");
        pairs->add_option("--cf-method", cfMethod, "second_best, worst or user:<action>");

        // explain
        auto* explain = app.add_subcommand("explain", "Explain one agent-visited state");
        std::string explainAgent;
        std::string traceId;
        int stepIndex = 0;
        std::string foil = "auto";
        std::string svgDir;
        std::string payloadPath;
        explain->add_option("--agent", explainAgent, "Agent id (default: inferred from the trace id)");
        explain->add_option("--trace", traceId, "Trace id")->required();
        explain->add_option("--step", stepIndex, "Origin step index")->required();
        explain->add_option("--foil", foil, "Counterfactual action or auto");
        explain->add_option("--k", kOpt, "Fact/foil horizon");
        explain->add_option("--svg", svgDir, "Write frame and bar SVGs to this directory");
        explain->add_option("--payload", payloadPath, "Write the payload JSON here instead of stdout");

        // summarize / render
        std::optional<std::string> method;
        std::optional<int> n;
        std::optional<int> overlap;
        bool noRender = false;
        auto* summarize = app.add_subcommand("summarize", "Select the top counterfactual pairs of each agent");
        summarize->add_option("--agent", agents, "Agent ids (default: every trained agent)");
        summarize->add_option("--method", method, "last-state, qdiff-second, qdiff-worst or frequency");
        summarize->add_option("--n", n, "Summary size");
        summarize->add_option("--overlap", overlap, "Maximum shared fact steps between entries");
        summarize->add_flag("--no-render", noRender, "Skip SVG output");

        auto* render = app.add_subcommand("render", "Re-render the SVGs of stored summaries");
        render->add_option("--agent", agents, "Agent ids (default: every trained agent)");
        render->add_option("--method", method, "Summary method");

        // serve
        auto* serveCmd = app.add_subcommand("serve", "Serve stored artifacts over HTTP");
        ServeOptions serveOptions;
        std::string staticDir;
        serveCmd->add_option("--port", serveOptions.port, "TCP port (0 picks a free one)");
        serveCmd->add_option("--host", serveOptions.host, "Bind address");
        serveCmd->add_option("--static", staticDir, "Directory of static UI assets");

        // pipeline
        auto* pipeline = app.add_subcommand("pipeline", "train, trace, pairs and summarize for the three study agents");
        pipeline->add_flag("--no-render", noRender, "Skip SVG output");

        std::vector<std::string> reversed(args.rbegin(), args.rend());
        try
        {
            app.parse(reversed);
        }
        catch (const CLI::CallForHelp&)
        {
            out << app.help();
            return kOk;
        }
        catch (const CLI::CallForAllHelp&)
        {
            out << app.help("", CLI::AppFormatMode::All);
            return kOk;
        }
        catch (const CLI::ParseError& e)
        {
            err << "error: " << e.what() << "\n";
            return kUsage;
        }

        return guarded(err, [&]() -> int {
            const RunLayout layout = common.layout();
            RunConfig config = common.resolve();
            if (kOpt)
                config.coviz.k = *kOpt;
            if (nsim)
                config.coviz.nsim = *nsim;
            if (cfMethod)
            {
                const auto parsed = CfMethod::parse(*cfMethod);
                if (!parsed)
                    throw ConfigError("unknown counterfactual method '" + *cfMethod + "'");
                config.coviz.cf_method = *parsed;
            }
            if (episodes)
                config.train.episodes = *episodes;

            if (train->parsed())
            {
                if (common.seed)
                    config.train.seed = *common.seed;
                config.validate();
                const AgentSpec spec = resolveAgentSpec(profile, weights, agentId);
                const AgentModel model = trainAgentArtifact(layout, config, spec);
                writeManifest(layout, config);
                out << "trained " << model.id() << " (" << model.meta().episodes_run << " episodes, "
                    << model.table().size() << " states) -> " << layout.agentFile(model.id()).string() << "\n";
                return kOk;
            }
            if (trace->parsed())
            {
                if (common.seed)
                    config.coviz.base_seed = *common.seed;
                config.validate();
                for (const auto& id : selectAgents(layout, agents))
                {
                    loadAgentArtifact(layout, id);
                }
                for (const auto& id : selectAgents(layout, agents))
                {
                    const auto traces = traceAgentArtifact(layout, config, id);
                    out << "recorded " << traces.size() << " traces for " << id << "\n";
                }
                writeManifest(layout, config);
                return kOk;
            }
            if (pairs->parsed())
            {
                if (common.seed)
                    config.coviz.base_seed = *common.seed;
                config.validate();
                for (const auto& id : selectAgents(layout, agents))
                {
                    loadAgentArtifact(layout, id);
                }
                for (const auto& id : selectAgents(layout, agents))
                {
                    const auto generated = pairAgentArtifact(layout, config, id);
                    out << "generated " << generated.size() << " pairs for " << id << "\n";
                }
                writeManifest(layout, config);
                return kOk;
            }
            if (explain->parsed())
            {
                config.validate();
                ExplainRequest request;
                request.trace_id = traceId;
                request.agent = explainAgent.empty() ? agentOfTrace(traceId) : explainAgent;
                request.origin = stepIndex;
                request.k = config.coviz.k;
                if (foil != "auto")
                {
                    const auto action = parseAction(foil);
                    if (!action)
                        throw ConfigError("unknown foil action '" + foil + "'");
                    request.foil = *action;
                }
                const CordPayload payload = explainArtifact(layout, config, request);
                const std::string text = toJson(payload).dump(1) + "\n";
                if (payloadPath.empty())
                    out << text;
                else
                    writeTextFile(payloadPath, text);
                if (!svgDir.empty())
                    renderSVG(payload.frames, payload.bars, svgDir);
                return kOk;
            }
            if (summarize->parsed())
            {
                SummarizeRequest base;
                base.method = method.value_or(config.summary.method);
                base.n = n.value_or(config.summary.n);
                base.overlap = overlap.value_or(config.summary.overlap);
                base.seed = common.seed.value_or(config.summary.seed);
                base.render = !noRender;
                validateSummarizeRequest(base);
                config.validate();
                const auto ids = selectAgents(layout, agents);
                for (const auto& id : ids)
                {
                    loadAgentArtifact(layout, id);
                }
                for (const auto& id : ids)
                {
                    SummarizeRequest request = base;
                    request.agent = id;
                    const auto result = summarizeAgentArtifact(layout, config, request);
                    out << id << ": " << result.summary.entries.size() << " entries ("
                        << result.summary.method.name() << "), rejoin fraction qdiff-second "
                        << result.diagnostics["rejoin_fraction"]["qdiff-second"].get<double>() << " vs last-state "
                        << result.diagnostics["rejoin_fraction"]["last-state"].get<double>() << "\n";
                }
                writeManifest(layout, config);
                return kOk;
            }
            if (render->parsed())
            {
                const std::string m = method.value_or(config.summary.method);
                for (const auto& id : selectAgents(layout, agents))
                {
                    const auto files = renderSummaryArtifact(layout, config, id, m);
                    out << "rendered " << files.size() << " files for " << id << "\n";
                }
                writeManifest(layout, config);
                return kOk;
            }
            if (serveCmd->parsed())
            {
                if (!staticDir.empty())
                    serveOptions.static_dir = staticDir;
                auto store = std::make_shared<const ArtifactStore>(ArtifactStore::load(layout.root()));
                const ApiService service(store);
                g_stop.store(false);
                std::signal(SIGINT, onSignal);
                std::signal(SIGTERM, onSignal);
                const int code = serve(service, serveOptions, g_stop, [&](int port) {
                    out << "serving " << store->agents().size() << " agents on http://" << serveOptions.host << ":"
                        << port << std::endl;
                });
                std::signal(SIGINT, SIG_DFL);
                std::signal(SIGTERM, SIG_DFL);
                if (code == kServePortInUse)
                {
                    err << "error: cannot bind " << serveOptions.host << ":" << serveOptions.port << "\n";
                    return kEnvironment;
                }
                out.flush();
                return kOk;
            }
            if (pipeline->parsed())
            {
                if (common.seed)
                    config.train.seed = *common.seed;
                runFullPipeline(layout, config, !noRender);
                out << "pipeline complete: " << layout.manifest().string() << "\n";
                return kOk;
            }
            return kUsage;
        });
    }
}
