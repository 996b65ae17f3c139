#include "coviz/coviz_engine.hpp"

#include "coviz/summary_select.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <thread>

namespace coviz
{
    std::string_view terminalCauseName(TerminalCause cause) noexcept
    {
        return cause == TerminalCause::Collision ? "collision" : "step_cap";
    }

    std::optional<TerminalCause> parseTerminalCause(std::string_view text) noexcept
    {
        if (text == "collision")
            return TerminalCause::Collision;
        if (text == "step_cap")
            return TerminalCause::StepCap;
        return std::nullopt;
    }

    std::vector<Action> Trace::actions() const
    {
        std::vector<Action> out;
        out.reserve(steps.size());
        for (const auto& s : steps)
        {
            out.push_back(s.action);
        }
        return out;
    }

    const SimState& Trace::stateAt(std::size_t i) const
    {
        if (i < steps.size())
            return steps[i].snapshot;
        if (i == steps.size())
            return final_state;
        throw std::out_of_range("trace " + trace_id + " has no state " + std::to_string(i));
    }

    std::string CfMethod::name() const
    {
        switch (kind)
        {
        case Kind::SecondBest:
            return "second_best";
        case Kind::Worst:
            return "worst";
        case Kind::UserChosen:
            return "user:" + std::string(actionName(user_action));
        }
        return "second_best";
    }

    std::optional<CfMethod> CfMethod::parse(std::string_view text)
    {
        if (text == "second_best" || text == "second-best" || text == "auto")
            return secondBest();
        if (text == "worst")
            return worst();
        if (text.starts_with("user:"))
        {
            if (auto a = parseAction(text.substr(5)))
                return userChosen(*a);
        }
        return std::nullopt;
    }

    void CovizConfig::validate() const
    {
        if (k < 1)
            throw ConfigError("coviz.k must be >= 1");
        if (nsim < 1)
            throw ConfigError("coviz.nsim must be >= 1");
    }

    std::string traceIdFor(const std::string& agentId, int index)
    {
        char buf[16];
        std::snprintf(buf, sizeof buf, "%04d", index);
        return agentId + "-t" + buf;
    }

    Trace runEpisode(const AgentModel& model, const HighwayEnv& env, std::uint64_t seed, std::string traceId)
    {
        Trace trace;
        trace.trace_id = std::move(traceId);
        trace.seed = seed;
        trace.agent_id = model.id();

        SimState state = env.reset(seed);
        while (!env.isTerminal(state))
        {
            TraceStep step;
            step.index = static_cast<int>(trace.steps.size());
            step.obs = env.observe(state);
            step.q = model.decomposedQ(step.obs);
            step.action = greedyAction(step.q);
            StepResult result = env.step(state, step.action);
            step.snapshot = std::move(state);
            step.reward = result.reward;
            step.terminated = result.terminated;
            trace.steps.push_back(std::move(step));
            state = std::move(result.next);
        }
        trace.cause = state.collided ? TerminalCause::Collision : TerminalCause::StepCap;
        trace.final_state = std::move(state);
        return trace;
    }

    std::vector<Trace> collectTraces(const AgentModel& model, const HighwayEnv& env, int nsim,
                                     std::uint64_t baseSeed)
    {
        std::vector<Trace> traces;
        traces.reserve(static_cast<std::size_t>(std::max(nsim, 0)));
        for (int i = 0; i < nsim; ++i)
        {
            traces.push_back(runEpisode(model, env, baseSeed + static_cast<std::uint64_t>(i), traceIdFor(model.id(), i)));
        }
        return traces;
    }

    Action selectCFAction(const DecomposedQ& q, Action fact, const CfMethod& method)
    {
        switch (method.kind)
        {
        case CfMethod::Kind::SecondBest:
            return rankedActions(q)[1];
        case CfMethod::Kind::Worst:
            return rankedActions(q)[kNumActions - 1];
        case CfMethod::Kind::UserChosen:
            if (method.user_action == fact)
            {
                throw InvalidFoilError("foil action '" + std::string(actionName(fact)) +
                                       "' equals the fact action");
            }
            return method.user_action;
        }
        return rankedActions(q)[1];
    }

    Rollout rolloutCounterfactual(const AgentModel& model, const HighwayEnv& env, const SimState& origin,
                                  Action forced, int k)
    {
        if (env.isTerminal(origin))
            throw UsageError("counterfactual rollout requested from a terminal origin");
        if (k < 1)
            throw UsageError("counterfactual rollout length must be >= 1");

        Rollout rollout;
        rollout.states.reserve(static_cast<std::size_t>(k));
        SimState current = origin;
        Action action = forced;
        for (int j = 0; j < k; ++j)
        {
            StepResult result = env.step(current, action);
            rollout.states.push_back(result.next);
            if (result.terminated)
            {
                rollout.cause = result.next.collided ? TerminalCause::Collision : TerminalCause::StepCap;
                break;
            }
            current = std::move(result.next);
            action = model.act(env.observe(current));
        }
        return rollout;
    }

    bool isEligibleOrigin(const Trace& trace, int origin, int k) noexcept
    {
        if (origin < 0 || k < 1)
            return false;
        return static_cast<std::size_t>(origin) + static_cast<std::size_t>(k) < trace.steps.size();
    }

    int eligibleOriginCount(const Trace& trace, int k) noexcept
    {
        if (k < 1)
            return 0;
        const long long n = static_cast<long long>(trace.steps.size()) - k;
        return n > 0 ? static_cast<int>(n) : 0;
    }

    CFPair makePair(const AgentModel& model, const HighwayEnv& env, const Trace& trace, int origin, int k,
                    Action foil, const CfMethod& method)
    {
        if (trace.agent_id != model.id())
        {
            throw ConsistencyError("trace " + trace.trace_id + " was recorded by agent '" + trace.agent_id +
                                   "', not '" + model.id() + "'");
        }
        if (!isEligibleOrigin(trace, origin, k))
        {
            throw UsageError("origin " + std::to_string(origin) + " of trace " + trace.trace_id +
                             " has fewer than " + std::to_string(k) + " following steps");
        }
        const TraceStep& step = trace.steps[static_cast<std::size_t>(origin)];
        if (foil == step.action)
        {
            throw InvalidFoilError("foil action '" + std::string(actionName(foil)) + "' equals the fact action");
        }

        CFPair pair;
        pair.trace_id = trace.trace_id;
        pair.agent_id = trace.agent_id;
        pair.origin_index = origin;
        pair.origin = step.snapshot;
        pair.fact_action = step.action;
        pair.origin_q = step.q;
        pair.fact.reserve(static_cast<std::size_t>(k));
        for (int j = 1; j <= k; ++j)
        {
            pair.fact.push_back(trace.stateAt(static_cast<std::size_t>(origin + j)));
        }

        Rollout rollout = rolloutCounterfactual(model, env, step.snapshot, foil, k);
        pair.foil = std::move(rollout.states);
        pair.foil_terminal = rollout.cause;
        pair.foil_action = foil;
        pair.cf_method = method;
        pair.degenerate = pair.foil.front() == pair.fact.front();

        pair.importance.last_state = lastStateImportance(model, env, pair);
        pair.importance.qdiff_second_best = qDiffImportance(pair.origin_q, QDiffVariant::SecondBest);
        pair.importance.qdiff_worst = qDiffImportance(pair.origin_q, QDiffVariant::Worst);
        return pair;
    }

    CFPair makePair(const AgentModel& model, const HighwayEnv& env, const Trace& trace, int origin, int k,
                    const CfMethod& method)
    {
        if (origin < 0 || static_cast<std::size_t>(origin) >= trace.steps.size())
            throw UsageError("origin " + std::to_string(origin) + " outside trace " + trace.trace_id);
        const TraceStep& step = trace.steps[static_cast<std::size_t>(origin)];
        return makePair(model, env, trace, origin, k, selectCFAction(step.q, step.action, method), method);
    }

    namespace
    {
        std::vector<CFPair> pairsForTrace(const AgentModel& model, const HighwayEnv& env, const Trace& trace,
                                          const CovizConfig& config)
        {
            std::vector<CFPair> out;
            const int count = eligibleOriginCount(trace, config.k);
            out.reserve(static_cast<std::size_t>(count));
            for (int i = 0; i < count; ++i)
            {
                out.push_back(makePair(model, env, trace, i, config.k, config.cf_method));
            }
            return out;
        }
    }

    std::vector<CFPair> generateCFPairs(const AgentModel& model, const HighwayEnv& env,
                                        std::span<const Trace> traces, const CovizConfig& config,
                                        PairGenerationStats* stats)
    {
        config.validate();
        for (const Trace& t : traces)
        {
            if (t.agent_id != model.id())
            {
                throw ConsistencyError("trace " + t.trace_id + " was recorded by agent '" + t.agent_id +
                                       "', not '" + model.id() + "'");
            }
        }

        std::vector<std::vector<CFPair>> perTrace(traces.size());
        unsigned workers = config.threads != 0 ? config.threads : std::max(1u, std::thread::hardware_concurrency());
        workers = static_cast<unsigned>(std::min<std::size_t>(workers, std::max<std::size_t>(traces.size(), 1)));

        if (workers <= 1)
        {
            for (std::size_t t = 0; t < traces.size(); ++t)
                perTrace[t] = pairsForTrace(model, env, traces[t], config);
        }
        else
        {
            std::atomic<std::size_t> nextTrace{0};
            std::exception_ptr failure;
            std::atomic<bool> failed{false};
            {
                std::vector<std::jthread> pool;
                pool.reserve(workers);
                for (unsigned w = 0; w < workers; ++w)
                {
                    pool.emplace_back([&] {
                        for (std::size_t t = nextTrace++; t < traces.size() && !failed; t = nextTrace++)
                        {
                            try
                            {
                                perTrace[t] = pairsForTrace(model, env, traces[t], config);
                            }
                            catch (...)
                            {
                                if (!failed.exchange(true))
                                    failure = std::current_exception();
                            }
                        }
                    });
                }
            }
            if (failure)
                std::rethrow_exception(failure);
        }

        std::vector<CFPair> pairs;
        PairGenerationStats local;
        for (auto& chunk : perTrace)
        {
            for (auto& p : chunk)
            {
                local.env_steps += p.foil.size();
                local.degenerate += p.degenerate ? 1 : 0;
                pairs.push_back(std::move(p));
            }
        }
        local.pairs = pairs.size();
        if (stats)
            *stats = local;
        return pairs;
    }

    CovizRun runCoviz(const AgentModel& model, const CovizConfig& config)
    {
        config.validate();
        const HighwayEnv env(model.env());
        CovizRun run;
        run.traces = collectTraces(model, env, config.nsim, config.base_seed);
        run.pairs = generateCFPairs(model, env, run.traces, config, &run.stats);
        return run;
    }
}
