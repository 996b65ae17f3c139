#pragma once

#include "coviz/highway_sim.hpp"
#include "coviz/hra_agent.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace coviz
{
    class ConsistencyError : public std::runtime_error
    {
    public:
        using std::runtime_error::runtime_error;
    };

    class InvalidFoilError : public std::invalid_argument
    {
    public:
        using std::invalid_argument::invalid_argument;
    };

    enum class TerminalCause : std::uint8_t
    {
        Collision,
        StepCap,
    };

    std::string_view terminalCauseName(TerminalCause cause) noexcept;
    std::optional<TerminalCause> parseTerminalCause(std::string_view text) noexcept;

    struct TraceStep
    {
        int index = 0;
        SimState snapshot;  // state at decision time
        Observation obs;
        Action action = Action::Idle;
        RewardVector reward;
        DecomposedQ q{};  // recorded at decision time
        bool terminated = false;

        bool operator==(const TraceStep&) const = default;
    };

    struct Trace
    {
        std::string trace_id;
        std::uint64_t seed = 0;
        std::string agent_id;
        std::vector<TraceStep> steps;
        SimState final_state;  // successor of the last step
        TerminalCause cause = TerminalCause::StepCap;

        std::vector<Action> actions() const;
        // Snapshot of state i, for 0 <= i <= steps.size().
        const SimState& stateAt(std::size_t i) const;

        bool operator==(const Trace&) const = default;
    };

    struct CfMethod
    {
        enum class Kind : std::uint8_t
        {
            SecondBest,
            Worst,
            UserChosen,
        };

        Kind kind = Kind::SecondBest;
        Action user_action = Action::Idle;  // only for UserChosen

        static CfMethod secondBest() noexcept { return {}; }
        static CfMethod worst() noexcept { return {Kind::Worst, Action::Idle}; }
        static CfMethod userChosen(Action a) noexcept { return {Kind::UserChosen, a}; }

        std::string name() const;
        static std::optional<CfMethod> parse(std::string_view text);

        bool operator==(const CfMethod&) const = default;
    };

    struct CovizConfig
    {
        int k = 7;
        int nsim = 200;
        CfMethod cf_method{};
        std::uint64_t base_seed = 1000;
        // 0 = hardware concurrency. Output order never depends on it.
        unsigned threads = 0;

        void validate() const;

        bool operator==(const CovizConfig&) const = default;
    };

    struct Importance
    {
        std::optional<double> last_state;
        std::optional<double> qdiff_second_best;
        std::optional<double> qdiff_worst;

        bool operator==(const Importance&) const = default;
    };

    struct CFPair
    {
        std::string trace_id;
        std::string agent_id;
        int origin_index = 0;
        SimState origin;           // trace state i, shared context of fact and foil
        Action fact_action = Action::Idle;
        DecomposedQ origin_q{};    // decision-time Q at the origin
        std::vector<SimState> fact;  // trace states i+1 .. i+k
        std::vector<SimState> foil;  // <= k states; shorter only on early termination
        Action foil_action = Action::Idle;
        CfMethod cf_method{};
        std::optional<TerminalCause> foil_terminal;
        // Fact and foil transitions clamp to the same successor.
        bool degenerate = false;
        Importance importance;

        int k() const noexcept { return static_cast<int>(fact.size()); }

        bool operator==(const CFPair&) const = default;
    };

    struct Rollout
    {
        std::vector<SimState> states;
        std::optional<TerminalCause> cause;
    };

    Trace runEpisode(const AgentModel& model, const HighwayEnv& env, std::uint64_t seed, std::string trace_id);

    std::string traceIdFor(const std::string& agent_id, int index);

    // Greedy episodes with seeds base_seed, base_seed + 1, ...
    std::vector<Trace> collectTraces(const AgentModel& model, const HighwayEnv& env, int nsim,
                                     std::uint64_t base_seed);

    Action selectCFAction(const DecomposedQ& q, Action fact, const CfMethod& method);

    Rollout rolloutCounterfactual(const AgentModel& model, const HighwayEnv& env, const SimState& origin,
                                  Action forced, int k);

    // Origins with k further fact states inside the trace.
    bool isEligibleOrigin(const Trace& trace, int origin, int k) noexcept;
    int eligibleOriginCount(const Trace& trace, int k) noexcept;

    // Builds one pair with an explicit foil action (the on-demand path).
    CFPair makePair(const AgentModel& model, const HighwayEnv& env, const Trace& trace, int origin, int k,
                    Action foil, const CfMethod& method);
    CFPair makePair(const AgentModel& model, const HighwayEnv& env, const Trace& trace, int origin, int k,
                    const CfMethod& method);

    struct PairGenerationStats
    {
        std::uint64_t env_steps = 0;  // transitions spent on foil rollouts
        std::size_t pairs = 0;
        std::size_t degenerate = 0;
    };

    std::vector<CFPair> generateCFPairs(const AgentModel& model, const HighwayEnv& env,
                                        std::span<const Trace> traces, const CovizConfig& config,
                                        PairGenerationStats* stats = nullptr);

    // Bundle of everything the local explanation stage produces.
    struct CovizRun
    {
        std::vector<Trace> traces;
        std::vector<CFPair> pairs;
        PairGenerationStats stats;
    };

    CovizRun runCoviz(const AgentModel& model, const CovizConfig& config);
}
