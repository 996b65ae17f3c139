#include "coviz/artifacts.hpp"
#include "coviz/explain_render.hpp"
#include "coviz/pipeline.hpp"

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

namespace py = pybind11;
using namespace coviz;

namespace
{
    using OptionalPath = std::optional<std::filesystem::path>;

    RunConfig configFor(const RunLayout& layout, const OptionalPath& config)
    {
        RunConfig resolved = resolveRunConfig(layout, config);
        resolved.validate();
        return resolved;
    }

    RunConfig configFile(const OptionalPath& config)
    {
        RunConfig resolved = config ? loadRunConfig(*config) : RunConfig{};
        resolved.validate();
        return resolved;
    }

    Action actionFrom(const std::string& name)
    {
        const auto action = parseAction(name);
        if (!action)
            throw ConfigError("unknown action '" + name + "'");
        return *action;
    }

    ExplainRequest explainRequest(const std::string& agent, const std::string& trace_id, int step,
                                  const std::optional<std::string>& foil, const RunConfig& config)
    {
        ExplainRequest request;
        request.agent = agent;
        request.trace_id = trace_id;
        request.origin = step;
        request.k = config.coviz.k;
        if (foil)
            request.foil = actionFrom(*foil);
        return request;
    }

    py::dict statsDict(const BehaviorStats& s)
    {
        py::dict d;
        d["episodes"] = s.episodes;
        d["steps"] = s.steps;
        d["right_most_occupancy"] = s.right_most_occupancy;
        d["mean_speed"] = s.mean_speed;
        d["lane_change_rate"] = s.lane_change_rate;
        d["collision_rate"] = s.collision_rate;
        d["mean_return"] = s.mean_return;
        return d;
    }
}

PYBIND11_MODULE(_core, m)
{
    m.doc() = "Counterfactual outcome explanations for highway driving agents";

    // Translators registered later are tried first, so subclasses follow their bases.
    py::register_exception<CheckpointError>(m, "CheckpointError", PyExc_OSError);
    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<UsageError>(m, "UsageError", PyExc_ValueError);
    py::register_exception<InvalidFoilError>(m, "InvalidFoilError", PyExc_ValueError);
    const auto dataError = py::register_exception<DataError>(m, "DataError", PyExc_LookupError);
    py::register_exception<NotFoundError>(m, "NotFoundError", dataError.ptr());
    py::register_exception<IneligibleOriginError>(m, "IneligibleOriginError", dataError.ptr());

    m.def("actions", [] {
        std::vector<std::string> names;
        for (std::size_t a = 0; a < kNumActions; ++a)
            names.emplace_back(actionName(static_cast<Action>(a)));
        return names;
    });
    m.def("components", [] { return std::vector<std::string>(kComponentLabels.begin(), kComponentLabels.end()); });
    m.def("profiles", [] {
        py::dict out;
        for (const RewardProfile& p : studyProfiles())
            out[py::str(p.name)] = std::vector<double>{p.weights.cl, p.weights.hs, p.weights.rml, p.weights.col};
        return out;
    });
    m.def("config_json", [](const OptionalPath& path) { return toJson(configFile(path)).dump(); },
          py::arg("path") = py::none());

    py::class_<AgentModel>(m, "Agent")
        .def_static(
            "train",
            [](const std::string& profile, const std::optional<int>& episodes, std::uint64_t seed,
               const OptionalPath& config) {
                const RunConfig rc = configFile(config);
                const AgentSpec spec = resolveAgentSpec(profile);
                EnvConfig env = rc.env;
                env.weights = spec.weights;
                Hyperparams hp = rc.train;
                hp.seed = seed;
                if (episodes)
                    hp.episodes = *episodes;
                hp.validate();
                py::gil_scoped_release release;
                return train(env, hp, spec.id, spec.profile);
            },
            py::arg("profile"), py::arg("episodes") = py::none(), py::arg("seed") = 0,
            py::arg("config") = py::none())
        .def_static("load", &loadAgent, py::arg("path"))
        .def("save", [](const AgentModel& self, const std::filesystem::path& path) { saveAgent(self, path); },
             py::arg("path"))
        .def_property_readonly("id", &AgentModel::id)
        .def_property_readonly("profile", &AgentModel::profile)
        .def_property_readonly("weights",
                               [](const AgentModel& self) {
                                   const RewardWeights& w = self.weights();
                                   return std::vector<double>{w.cl, w.hs, w.rml, w.col};
                               })
        .def_property_readonly("states", [](const AgentModel& self) { return self.table().size(); })
        .def(
            "q",
            [](const AgentModel& self, int lane, int speed_level, const std::array<bool, 6>& occupancy,
               bool at_right_most) {
                Observation obs;
                obs.ego_lane = lane;
                obs.ego_speed_level = speed_level;
                obs.occupancy = occupancy;
                obs.at_right_most = at_right_most;
                return self.decomposedQ(obs);
            },
            py::arg("lane"), py::arg("speed_level"), py::arg("occupancy"), py::arg("at_right_most"),
            "Decomposed Q as [component][action].")
        .def(
            "evaluate",
            [](const AgentModel& self, int episodes, std::uint64_t seed) {
                BehaviorStats stats;
                {
                    py::gil_scoped_release release;
                    stats = evaluateGreedy(self, episodes, seed);
                }
                return statsDict(stats);
            },
            py::arg("episodes") = 200, py::arg("seed") = 0);

    m.def(
        "run_pipeline",
        [](const std::filesystem::path& out, const OptionalPath& config, bool render) {
            const RunConfig rc = configFile(config);
            py::gil_scoped_release release;
            runFullPipeline(RunLayout(out), rc, render);
        },
        py::arg("out"), py::arg("config") = py::none(), py::arg("render") = true);

    m.def(
        "explain_json",
        [](const std::filesystem::path& out, const std::string& agent, const std::string& trace_id, int step,
           const std::optional<std::string>& foil, const OptionalPath& config) {
            const RunLayout layout(out);
            const RunConfig rc = configFor(layout, config);
            return toJson(explainArtifact(layout, rc, explainRequest(agent, trace_id, step, foil, rc))).dump();
        },
        py::arg("out"), py::arg("agent"), py::arg("trace_id"), py::arg("step"), py::arg("foil") = py::none(),
        py::arg("config") = py::none());

    m.def(
        "explain_svg",
        [](const std::filesystem::path& out, const std::string& agent, const std::string& trace_id, int step,
           const std::optional<std::string>& foil, const OptionalPath& config) {
            const RunLayout layout(out);
            const RunConfig rc = configFor(layout, config);
            const CordPayload payload =
                explainArtifact(layout, rc, explainRequest(agent, trace_id, step, foil, rc));
            std::vector<std::string> svgs{frameToSvg(payload.frames.origin, payload.frames.viewport)};
            for (const Frame& frame : payload.frames.frames)
                svgs.push_back(frameToSvg(frame, payload.frames.viewport));
            svgs.push_back(barChartToSvg(payload.bars));
            return svgs;
        },
        py::arg("out"), py::arg("agent"), py::arg("trace_id"), py::arg("step"), py::arg("foil") = py::none(),
        py::arg("config") = py::none(), "Origin frame, k frames, then the reward bar chart.");

    m.def(
        "summarize_json",
        [](const std::filesystem::path& out, const std::string& agent, const std::optional<std::string>& method,
           const std::optional<int>& n, const std::optional<int>& overlap, const std::optional<std::uint64_t>& seed,
           bool render, const OptionalPath& config) {
            const RunLayout layout(out);
            const RunConfig rc = configFor(layout, config);
            SummarizeRequest request;
            request.agent = agent;
            request.method = method.value_or(rc.summary.method);
            request.n = n.value_or(rc.summary.n);
            request.overlap = overlap.value_or(rc.summary.overlap);
            request.seed = seed.value_or(rc.summary.seed);
            request.render = render;
            validateSummarizeRequest(request);
            const SummarizeResult result = summarizeAgentArtifact(layout, rc, request);
            writeManifest(layout, rc);
            json j = summaryToJson(result.summary);
            j["rejoin_report"] = result.diagnostics;
            return j.dump();
        },
        py::arg("out"), py::arg("agent"), py::arg("method") = py::none(), py::arg("n") = py::none(),
        py::arg("overlap") = py::none(), py::arg("seed") = py::none(), py::arg("render") = false,
        py::arg("config") = py::none());

    m.def("verify_manifest", [](const std::filesystem::path& out) { verifyManifest(RunLayout(out)); },
          py::arg("out"));
    m.def("manifest_sha256", [](const std::filesystem::path& out) { return fileSha256(RunLayout(out).manifest()); },
          py::arg("out"));
}
