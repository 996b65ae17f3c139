#include "fixtures.hpp"

#include <doctest.h>

#include <fstream>

using namespace coviz;

namespace
{
    RunConfig quickConfig()
    {
        RunConfig c;
        c.train.episodes = 60;
        c.coviz.nsim = 6;
        return c;
    }

    void appendTo(const std::filesystem::path& path, std::string_view text)
    {
        std::ofstream out(path, std::ios::app | std::ios::binary);
        out << text;
    }
}

TEST_SUITE("artifacts")
{
    TEST_CASE("sha256 known answers")
    {
        CHECK(sha256Hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
        CHECK(sha256Hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
        test::TempDir dir("sha");
        writeTextFile(dir.path() / "f.txt", "abc");
        CHECK(fileSha256(dir.path() / "f.txt") == sha256Hex("abc"));
    }

    TEST_CASE("text files")
    {
        test::TempDir dir("text");
        writeTextFile(dir.path() / "a" / "b" / "c.txt", "hello\n");
        CHECK(readTextFile(dir.path() / "a" / "b" / "c.txt") == "hello\n");
        CHECK_THROWS_AS(readTextFile(dir.path() / "missing.txt"), DataError);
    }

    TEST_CASE("trace round-trip")
    {
        const auto& run = test::smallRun();
        for (const Trace& t : run.traces)
        {
            const std::string text = traceToJsonl(t);
            const Trace back = traceFromJsonl(text);
            CHECK(back == t);
            CHECK(traceToJsonl(back) == text);
            // one header line plus one line per step
            CHECK(static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n')) == t.steps.size() + 1);
        }
        test::TempDir dir("trace");
        writeTrace(dir.path() / "t.jsonl", run.traces.front());
        CHECK(readTrace(dir.path() / "t.jsonl") == run.traces.front());
    }

    TEST_CASE("malformed traces are data errors")
    {
        const Trace& t = test::smallRun().traces.front();
        const std::string text = traceToJsonl(t);
        const auto firstBreak = text.find('\n');
        const auto secondBreak = text.find('\n', firstBreak + 1);

        CHECK_THROWS_AS(traceFromJsonl(""), DataError);
        CHECK_THROWS_AS(traceFromJsonl("{not json}\n"), DataError);
        // a step removed from the middle
        CHECK_THROWS_AS(traceFromJsonl(text.substr(0, firstBreak + 1) + text.substr(secondBreak + 1)), DataError);
        // header only
        CHECK_THROWS_AS(traceFromJsonl(text.substr(0, firstBreak + 1)), DataError);
    }

    TEST_CASE("pair round-trip rebuilds from the traces")
    {
        const auto& run = test::smallRun();
        test::TempDir dir("pairs");
        const auto path = dir.path() / "pairs.jsonl";
        writePairs(path, run.pairs);
        const auto back = readPairs(path, run.traces);
        CHECK(back == run.pairs);

        const json j = pairToJson(run.pairs.front());
        CHECK(j["trace_id"] == run.pairs.front().trace_id);
        CHECK(j["k"] == 7);
        CHECK(j.contains("importance"));
    }

    TEST_CASE("pairs referencing a missing trace are rejected")
    {
        const auto& run = test::smallRun();
        test::TempDir dir("pairs-missing");
        const auto path = dir.path() / "pairs.jsonl";
        writePairs(path, run.pairs);
        const std::vector<Trace> partial(run.traces.begin() + 1, run.traces.end());
        CHECK_THROWS_AS(readPairs(path, partial), DataError);
    }

    TEST_CASE("trace step JSON")
    {
        const Trace& t = test::smallRun().traces.front();
        const json first = traceStepJson(t.steps.front(), t, 7);
        CHECK(first["eligible"] == true);
        CHECK(first["ranked_actions"].size() == kNumActions);
        const json last = traceStepJson(t.steps.back(), t, 7);
        CHECK(last["eligible"] == false);
    }

    TEST_CASE("run layout and manifest")
    {
        test::TempDir dir("manifest");
        const RunLayout layout(dir.path());
        const RunConfig config = quickConfig();
        writeTextFile(layout.agentFile("b"), "{}");
        writeTextFile(layout.agentFile("a"), "{}");
        writeTextFile(layout.pairsFile("a"), "x\n");
        CHECK(layout.agentIds() == std::vector<std::string>{"a", "b"});

        writeManifest(layout, config);
        const json m = json::parse(readTextFile(layout.manifest()));
        CHECK(m["tool"] == "coviz");
        CHECK(m["tool_version"] == kToolVersion);
        CHECK(m["seeds"]["trace_base"] == 1000);
        CHECK(m["artifacts"].size() == 3);
        CHECK(m["artifacts"]["pairs/a.jsonl"] == sha256Hex("x\n"));
        CHECK_NOTHROW(verifyManifest(layout));

        // the manifest is a pure function of the files and the config
        const std::string before = readTextFile(layout.manifest());
        writeManifest(layout, config);
        CHECK(readTextFile(layout.manifest()) == before);

        appendTo(layout.pairsFile("a"), "y\n");
        CHECK_THROWS_AS(verifyManifest(layout), DataError);
        writeTextFile(layout.pairsFile("a"), "x\n");
        CHECK_NOTHROW(verifyManifest(layout));
        std::filesystem::remove(layout.agentFile("b"));
        CHECK_THROWS_AS(verifyManifest(layout), DataError);
        writeTextFile(layout.manifest(), "{");
        CHECK_THROWS_AS(verifyManifest(layout), DataError);
    }
}

TEST_SUITE("pipeline")
{
    TEST_CASE("agent specs")
    {
        const AgentSpec a = resolveAgentSpec("agent2");
        CHECK(a.id == "agent2");
        CHECK(a.weights == findProfile("agent2")->weights);

        const AgentSpec c = resolveAgentSpec("custom", std::string("1,2,3,-4"), std::string("mine"));
        CHECK(c.id == "mine");
        CHECK(c.weights == RewardWeights{1.0, 2.0, 3.0, -4.0});

        CHECK_THROWS_AS(resolveAgentSpec("agent9"), ConfigError);
        CHECK_THROWS_AS(resolveAgentSpec("custom"), ConfigError);
        CHECK_THROWS_AS(resolveAgentSpec("custom", std::string("1,2,3")), ConfigError);
        CHECK_THROWS_AS(resolveAgentSpec("custom", std::string("1,2,x,4")), ConfigError);
    }

    TEST_CASE("stage by stage")
    {
        test::TempDir dir("stages");
        const RunLayout layout(dir.path());
        const RunConfig config = quickConfig();

        CHECK_THROWS_AS(loadAgentArtifact(layout, "agent1"), NotFoundError);
        const AgentModel model = trainAgentArtifact(layout, config, resolveAgentSpec("agent1"));
        CHECK(loadAgentArtifact(layout, "agent1") == model);

        const auto traces = traceAgentArtifact(layout, config, "agent1");
        CHECK(traces.size() == 6);
        CHECK(readTraces(layout, "agent1") == traces);

        const auto pairs = pairAgentArtifact(layout, config, "agent1");
        CHECK(ensurePairs(layout, config, "agent1") == pairs);
        CHECK(readPairs(layout.pairsFile("agent1"), traces) == pairs);

        SummarizeRequest request;
        request.agent = "agent1";
        request.render = true;
        const SummarizeResult result = summarizeAgentArtifact(layout, config, request);
        CHECK(result.summary.entries.size() <= 4);
        CHECK(result.payloads.size() == result.summary.entries.size());
        CHECK(result.summary.manifest_hash == provenanceHash(layout, "agent1"));
        CHECK(std::filesystem::exists(layout.summaryFile("agent1", "last-state")));
        CHECK(std::filesystem::exists(layout.diagnosticsFile("agent1")));
        for (std::size_t i = 0; i < result.payloads.size(); ++i)
        {
            CHECK(result.payloads[i].score == result.summary.entries[i].score);
            CHECK(result.payloads[i].trace_id == result.summary.entries[i].pair.trace_id);
        }
        if (!result.payloads.empty())
            CHECK(std::filesystem::exists(layout.renderDir("agent1", "last-state") / "entry_00" / "frame_00.svg"));

        const auto rendered = renderSummaryArtifact(layout, config, "agent1", "last-state");
        CHECK(rendered.size() == result.payloads.size() * 9);

        // retraining replaces the agent's downstream outputs
        trainAgentArtifact(layout, config, resolveAgentSpec("agent1"));
        CHECK_FALSE(std::filesystem::exists(layout.pairsFile("agent1")));
        CHECK_FALSE(std::filesystem::exists(layout.summaryFile("agent1", "last-state")));
    }

    TEST_CASE("explain requests")
    {
        const RunLayout layout(test::sharedRunDir());
        const RunConfig config = resolveRunConfig(layout, std::nullopt);
        const auto traces = readTraces(layout, "agent1");
        const Trace& t = traces.front();
        const Action fact = t.steps.front().action;
        const Action other = fact == Action::Slower ? Action::Faster : Action::Slower;

        ExplainRequest request{"agent1", t.trace_id, 0, std::nullopt, 7};
        const CordPayload automatic = explainArtifact(layout, config, request);
        CHECK(automatic.fact_action == fact);
        CHECK(automatic.foil_action == rankedActions(t.steps.front().q)[1]);
        CHECK(automatic.cf_method == "second_best");

        request.foil = automatic.foil_action;
        CHECK(explainArtifact(layout, config, request).cf_method == "second_best");

        request.foil = other;
        if (other != automatic.foil_action)
            CHECK(explainArtifact(layout, config, request).cf_method == "user:" + std::string(actionName(other)));

        request.foil = fact;
        CHECK_THROWS_AS(explainArtifact(layout, config, request), InvalidFoilError);

        request.foil.reset();
        request.origin = static_cast<int>(t.steps.size()) - 3;
        CHECK_THROWS_AS(explainArtifact(layout, config, request), IneligibleOriginError);
        request.origin = static_cast<int>(t.steps.size()) + 5;
        CHECK_THROWS_AS(explainArtifact(layout, config, request), NotFoundError);
        request.origin = 0;
        request.trace_id = "agent1-t9999";
        CHECK_THROWS_AS(explainArtifact(layout, config, request), NotFoundError);
        request.trace_id = t.trace_id;
        request.agent = "agent7";
        CHECK_THROWS_AS(explainArtifact(layout, config, request), NotFoundError);
        request.agent = "agent1";
        request.k = 0;
        CHECK_THROWS_AS(explainArtifact(layout, config, request), ConfigError);
    }

    TEST_CASE("shared run is complete and verifiable")
    {
        const RunLayout layout(test::sharedRunDir());
        CHECK(layout.agentIds() == studyAgentIds());
        CHECK_NOTHROW(verifyManifest(layout));
        const RunConfig config = resolveRunConfig(layout, std::nullopt);
        CHECK(config.coviz.nsim == 40);
        for (const auto& agent : studyAgentIds())
        {
            CHECK(std::filesystem::exists(layout.summaryFile(agent, "last-state")));
            const json diag = json::parse(readTextFile(layout.diagnosticsFile(agent)));
            CHECK(diag["agent_id"] == agent);
            CHECK(diag["rejoin_fraction"].contains("qdiff-second"));
            CHECK(diag["rejoin_fraction"].contains("last-state"));
        }
    }

    TEST_CASE("summarize request validation")
    {
        SummarizeRequest r;
        r.agent = "agent1";
        CHECK_NOTHROW(validateSummarizeRequest(r));
        r.n = 0;
        CHECK_THROWS_AS(validateSummarizeRequest(r), ConfigError);
        r.n = 4;
        r.overlap = -1;
        CHECK_THROWS_AS(validateSummarizeRequest(r), ConfigError);
        r.overlap = 5;
        r.method = "entropy";
        CHECK_THROWS_AS(validateSummarizeRequest(r), ConfigError);
    }

    TEST_CASE("full pipeline is reproducible")
    {
        test::TempDir a("repro-a");
        test::TempDir b("repro-b");
        const RunConfig config = quickConfig();
        runFullPipeline(RunLayout(a.path()), config, false);
        runFullPipeline(RunLayout(b.path()), config, false);
        CHECK(readTextFile(a.path() / "manifest.json") == readTextFile(b.path() / "manifest.json"));
    }
}
