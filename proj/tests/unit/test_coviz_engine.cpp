#include "fixtures.hpp"

#include <doctest.h>

#include <numeric>

using namespace coviz;
using coviz::test::handState;
using coviz::test::qWithTotals;

namespace
{
    Trace syntheticTrace(std::size_t length, TerminalCause cause)
    {
        Trace t;
        t.trace_id = "x-t0000";
        t.agent_id = "x";
        t.steps.resize(length);
        for (std::size_t i = 0; i < length; ++i)
            t.steps[i].index = static_cast<int>(i);
        t.cause = cause;
        return t;
    }
}

TEST_SUITE("coviz_engine")
{
    TEST_CASE("collectTraces: count, ids, seeds and determinism")
    {
        const AgentModel& model = test::studyAgent("agent1");
        const HighwayEnv env(model.env());
        const auto a = collectTraces(model, env, 5, 1000);
        const auto b = collectTraces(model, env, 5, 1000);
        REQUIRE(a.size() == 5);
        CHECK(a == b);
        for (std::size_t i = 0; i < a.size(); ++i)
        {
            CHECK(a[i].trace_id == traceIdFor("agent1", static_cast<int>(i)));
            CHECK(a[i].seed == 1000 + i);
            CHECK(a[i].agent_id == "agent1");
        }
        CHECK(traceIdFor("agent2", 17) == "agent2-t0017");
    }

    TEST_CASE("trace steps are greedy and chain through the simulator")
    {
        const auto& run = test::smallRun();
        const AgentModel& model = test::studyAgent("agent1");
        const HighwayEnv env(model.env());
        for (const Trace& t : run.traces)
        {
            CAPTURE(t.trace_id);
            REQUIRE_FALSE(t.steps.empty());
            CHECK(t.steps.front().snapshot == env.reset(t.seed));
            for (std::size_t i = 0; i < t.steps.size(); ++i)
            {
                const TraceStep& s = t.steps[i];
                CHECK(s.index == static_cast<int>(i));
                CHECK(s.obs == env.observe(s.snapshot));
                CHECK(s.q == model.decomposedQ(s.obs));
                CHECK(s.action == greedyAction(s.q));
                const StepResult r = env.step(s.snapshot, s.action);
                CHECK(r.next == t.stateAt(i + 1));
                CHECK(r.reward == s.reward);
                CHECK(s.terminated == (i + 1 == t.steps.size()));
            }
            CHECK(env.isTerminal(t.final_state));
            CHECK((t.cause == TerminalCause::Collision) == t.final_state.collided);
            if (t.cause == TerminalCause::StepCap)
                CHECK(static_cast<int>(t.steps.size()) == env.config().episode_cap);

            const auto replay = env.replayTrace(t.seed, t.actions());
            REQUIRE(replay.size() == t.steps.size() + 1);
            for (std::size_t i = 0; i <= t.steps.size(); ++i)
                CHECK(replay[i] == t.stateAt(i));
        }
        CHECK_THROWS_AS(run.traces.front().stateAt(run.traces.front().steps.size() + 1), std::out_of_range);
    }

    TEST_CASE("selectCFAction")
    {
        const DecomposedQ q = qWithTotals({1, 5, 3, 2, 4});
        CHECK(selectCFAction(q, Action::Idle, CfMethod::secondBest()) == Action::Slower);
        CHECK(selectCFAction(q, Action::Idle, CfMethod::worst()) == Action::LaneLeft);
        CHECK(selectCFAction(q, Action::Idle, CfMethod::userChosen(Action::Faster)) == Action::Faster);
        CHECK_THROWS_AS(selectCFAction(q, Action::Idle, CfMethod::userChosen(Action::Idle)), InvalidFoilError);

        // ties resolve by ordinal, so an all-zero table picks Idle then Slower
        CHECK(selectCFAction(DecomposedQ{}, Action::LaneLeft, CfMethod::secondBest()) == Action::Idle);
        CHECK(selectCFAction(DecomposedQ{}, Action::LaneLeft, CfMethod::worst()) == Action::Slower);
    }

    TEST_CASE("CfMethod names round-trip")
    {
        for (const CfMethod m : {CfMethod::secondBest(), CfMethod::worst(), CfMethod::userChosen(Action::Faster)})
            CHECK(CfMethod::parse(m.name()) == m);
        CHECK(CfMethod::parse("auto") == CfMethod::secondBest());
        CHECK_FALSE(CfMethod::parse("best").has_value());
        CHECK_FALSE(CfMethod::parse("user:warp").has_value());
    }

    TEST_CASE("rollout on an open road has k states")
    {
        const AgentModel& model = test::studyAgent("agent1");
        const HighwayEnv env(test::emptyRoad());
        const Rollout r = rolloutCounterfactual(model, env, handState({1, 0.0, 1}), Action::LaneRight, 7);
        REQUIRE(r.states.size() == 7);
        CHECK_FALSE(r.cause.has_value());
        CHECK(r.states.front().ego.lane == 2);
        for (std::size_t j = 0; j < r.states.size(); ++j)
            CHECK(r.states[j].step_index == static_cast<int>(j) + 1);
    }

    TEST_CASE("rollout into a blocked lane terminates early")
    {
        const AgentModel& model = test::studyAgent("agent1");
        const HighwayEnv env(test::emptyRoad());
        const SimState origin = handState({1, 0.0, 0}, {{2, 2.0, 2}});
        const Rollout r = rolloutCounterfactual(model, env, origin, Action::LaneRight, 7);
        REQUIRE(r.states.size() == 1);
        CHECK(r.states.front().collided);
        CHECK(r.cause == TerminalCause::Collision);
    }

    TEST_CASE("rollout stops at the step cap")
    {
        EnvConfig c = test::emptyRoad();
        c.episode_cap = 5;
        const HighwayEnv env(c);
        const AgentModel& model = test::studyAgent("agent1");
        const Rollout r = rolloutCounterfactual(model, env, handState({1, 0.0, 1}, {}, 2), Action::Idle, 7);
        CHECK(r.states.size() == 3);
        CHECK(r.cause == TerminalCause::StepCap);
    }

    TEST_CASE("rollout preconditions")
    {
        const auto& run = test::smallRun();
        const AgentModel& model = test::studyAgent("agent1");
        const HighwayEnv env(model.env());
        const Trace& t = run.traces.front();
        CHECK_THROWS_AS(rolloutCounterfactual(model, env, t.final_state, Action::Idle, 7), UsageError);
        CHECK_THROWS_AS(rolloutCounterfactual(model, env, t.steps.front().snapshot, Action::Idle, 0), UsageError);
    }

    TEST_CASE("forcing the fact action reproduces the fact states")
    {
        const auto& run = test::smallRun();
        const AgentModel& model = test::studyAgent("agent1");
        const HighwayEnv env(model.env());
        for (const Trace& t : run.traces)
        {
            for (int i = 0; i < eligibleOriginCount(t, 7); i += 5)
            {
                const TraceStep& s = t.steps[static_cast<std::size_t>(i)];
                const Rollout r = rolloutCounterfactual(model, env, s.snapshot, s.action, 7);
                REQUIRE(r.states.size() == 7);
                for (std::size_t j = 0; j < 7; ++j)
                    CHECK(r.states[j] == t.stateAt(static_cast<std::size_t>(i) + 1 + j));
            }
        }
    }

    TEST_CASE("eligible origins")
    {
        const Trace full = syntheticTrace(80, TerminalCause::StepCap);
        CHECK(eligibleOriginCount(full, 7) == 73);
        CHECK(isEligibleOrigin(full, 72, 7));
        CHECK_FALSE(isEligibleOrigin(full, 73, 7));
        CHECK_FALSE(isEligibleOrigin(full, -1, 7));
        CHECK_FALSE(isEligibleOrigin(full, 0, 0));

        const Trace crashed = syntheticTrace(10, TerminalCause::Collision);
        CHECK(eligibleOriginCount(crashed, 7) == 3);
        CHECK(eligibleOriginCount(syntheticTrace(7, TerminalCause::Collision), 7) == 0);
        CHECK(eligibleOriginCount(syntheticTrace(3, TerminalCause::Collision), 7) == 0);
        CHECK(eligibleOriginCount(full, 0) == 0);
    }

    TEST_CASE("pair count and canonical order")
    {
        const auto& run = test::smallRun();
        std::size_t expected = 0;
        for (const Trace& t : run.traces)
            expected += static_cast<std::size_t>(std::max<long long>(0, static_cast<long long>(t.steps.size()) - 7));
        CHECK(run.pairs.size() == expected);

        std::size_t p = 0;
        for (const Trace& t : run.traces)
        {
            for (int i = 0; i < eligibleOriginCount(t, 7); ++i, ++p)
            {
                REQUIRE(p < run.pairs.size());
                CHECK(run.pairs[p].trace_id == t.trace_id);
                CHECK(run.pairs[p].origin_index == i);
            }
        }
    }

    TEST_CASE("pair contents")
    {
        const auto& run = test::smallRun();
        const AgentModel& model = test::studyAgent("agent1");
        const HighwayEnv env(model.env());
        std::map<std::string, const Trace*> byId;
        for (const Trace& t : run.traces)
            byId[t.trace_id] = &t;

        for (const CFPair& pair : run.pairs)
        {
            const Trace& t = *byId.at(pair.trace_id);
            const TraceStep& s = t.steps[static_cast<std::size_t>(pair.origin_index)];
            CHECK(pair.agent_id == "agent1");
            CHECK(pair.origin == s.snapshot);
            CHECK(pair.fact_action == s.action);
            CHECK(pair.origin_q == s.q);
            CHECK(pair.k() == 7);
            for (std::size_t j = 0; j < pair.fact.size(); ++j)
                CHECK(pair.fact[j] == t.stateAt(static_cast<std::size_t>(pair.origin_index) + 1 + j));

            CHECK(pair.foil_action != pair.fact_action);
            CHECK(pair.foil_action == rankedActions(s.q)[1]);
            REQUIRE_FALSE(pair.foil.empty());
            CHECK(pair.foil.size() <= 7);
            CHECK(pair.foil.front() == env.step(s.snapshot, pair.foil_action).next);
            CHECK(pair.foil_terminal.has_value() == (pair.foil.size() < 7 || env.isTerminal(pair.foil.back())));
            CHECK(pair.degenerate == (pair.foil.front() == pair.fact.front()));
            if (pair.foil.size() < 7)
                CHECK(pair.foil_terminal == TerminalCause::Collision);
            REQUIRE(pair.importance.last_state.has_value());
            const auto value = [&](const SimState& st) {
                return env.isTerminal(st) ? 0.0 : model.stateValue(env.observe(st));
            };
            CHECK(*pair.importance.last_state == std::abs(value(pair.fact.back()) - value(pair.foil.back())));
        }
    }

    TEST_CASE("degenerate pairs come from clamped actions")
    {
        const AgentModel& model = test::studyAgent("agent1");
        EnvConfig c = test::emptyRoad();
        c.ego_start_lane = 0;
        const HighwayEnv env(c);
        const Trace t = runEpisode(model, env, 5, "agent1-t0000");
        REQUIRE(eligibleOriginCount(t, 7) > 0);
        const TraceStep& s = t.steps.front();
        REQUIRE(s.snapshot.ego.lane == 0);

        int degenerate = 0;
        for (Action foil : kAllActions)
        {
            if (foil == s.action)
                continue;
            const CFPair pair = makePair(model, env, t, 0, 7, foil, CfMethod::userChosen(foil));
            const bool same = env.step(s.snapshot, foil).next == env.step(s.snapshot, s.action).next;
            CHECK(pair.degenerate == same);
            degenerate += pair.degenerate ? 1 : 0;
        }
        // LaneLeft clamps to Idle in the leftmost lane
        const bool clampPair = s.action == Action::LaneLeft || s.action == Action::Idle;
        CHECK(degenerate >= (clampPair ? 1 : 0));
    }

    TEST_CASE("makePair rejects bad requests")
    {
        const auto& run = test::smallRun();
        const AgentModel& model = test::studyAgent("agent1");
        const AgentModel& other = test::studyAgent("agent2");
        const HighwayEnv env(model.env());
        const Trace& t = run.traces.front();
        CHECK_THROWS_AS(makePair(other, env, t, 0, 7, CfMethod::secondBest()), ConsistencyError);
        CHECK_THROWS_AS(makePair(model, env, t, static_cast<int>(t.steps.size()) - 7, 7, CfMethod::secondBest()),
                        UsageError);
        CHECK_THROWS_AS(makePair(model, env, t, 0, 7, t.steps.front().action, CfMethod::secondBest()),
                        InvalidFoilError);

        const std::vector<Trace> traces{t};
        CHECK_THROWS_AS(generateCFPairs(other, env, traces, CovizConfig{}), ConsistencyError);
    }

    TEST_CASE("generation stats and thread independence")
    {
        const auto& run = test::smallRun();
        const AgentModel& model = test::studyAgent("agent1");
        const HighwayEnv env(model.env());

        CovizConfig one = run.config;
        one.threads = 1;
        CovizConfig four = run.config;
        four.threads = 4;
        PairGenerationStats s1;
        PairGenerationStats s4;
        const auto p1 = generateCFPairs(model, env, run.traces, one, &s1);
        const auto p4 = generateCFPairs(model, env, run.traces, four, &s4);
        CHECK(p1 == p4);
        CHECK(p1 == run.pairs);

        const std::uint64_t steps = std::accumulate(p1.begin(), p1.end(), std::uint64_t{0},
                                                    [](std::uint64_t acc, const CFPair& p) { return acc + p.foil.size(); });
        CHECK(s1.env_steps == steps);
        CHECK(s1.pairs == p1.size());
        CHECK(s1.degenerate ==
              static_cast<std::size_t>(std::count_if(p1.begin(), p1.end(), [](const CFPair& p) { return p.degenerate; })));
        CHECK(s4.env_steps == s1.env_steps);
    }

    TEST_CASE("config validation")
    {
        CovizConfig c;
        CHECK(c.k == 7);
        CHECK(c.nsim == 200);
        CHECK(c.base_seed == 1000);
        CHECK(c.cf_method == CfMethod::secondBest());
        c.k = 0;
        CHECK_THROWS_AS(c.validate(), ConfigError);
        c = CovizConfig{};
        c.nsim = 0;
        CHECK_THROWS_AS(c.validate(), ConfigError);
    }
}
