#pragma once

#include "coviz/highway_sim.hpp"
#include "coviz/hra_learner.hpp"

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace coviz
{
    enum class Component : std::uint8_t
    {
        CL = 0,
        HS = 1,
        RML = 2,
        COL = 3,
    };

    inline constexpr std::size_t kNumComponents = 4;
    inline constexpr std::array<std::string_view, kNumComponents> kComponentLabels{"CL", "HS", "RML", "COL"};

    using DecomposedQ = QMatrix<kNumComponents, kNumActions>;
    using ActionTotals = std::array<double, kNumActions>;

    ActionTotals totalQ(const DecomposedQ& q) noexcept;
    Action greedyAction(const DecomposedQ& q) noexcept;
    std::array<Action, kNumActions> rankedActions(const DecomposedQ& q);

    // How the collision penalty is routed to the learning heads.
    enum class CollisionHead : std::uint8_t
    {
        Separate,     // own COL head
        FoldUniform,  // w_col split equally over CL/HS/RML; COL head stays zero
    };

    std::array<double, kNumComponents> headRewards(const RewardVector& r, CollisionHead mode) noexcept;

    struct RewardProfile
    {
        std::string name;
        RewardWeights weights;
    };

    // Reward-type weights of the three study agents.
    const std::vector<RewardProfile>& studyProfiles();
    std::optional<RewardProfile> findProfile(std::string_view name);

    struct Hyperparams
    {
        double alpha = 0.1;
        double gamma = 0.9;
        double epsilon_start = 1.0;
        double epsilon_end = 0.05;
        // Linear decay length; unset means 80% of the episodes.
        std::optional<int> epsilon_decay_episodes;
        int episodes = 2000;
        std::uint64_t seed = 0;
        CollisionHead collision_head = CollisionHead::Separate;

        void validate() const;
        int decayEpisodes() const noexcept;
        double epsilonAt(int episode) const noexcept;

        bool operator==(const Hyperparams&) const = default;
    };

    struct TrainingMeta
    {
        int episodes_run = 0;
        std::uint64_t env_steps = 0;
        int collisions = 0;

        bool operator==(const TrainingMeta&) const = default;
    };

    class AgentModel
    {
    public:
        AgentModel() = default;
        AgentModel(std::string id, std::string profile, EnvConfig env, Hyperparams hp);

        const std::string& id() const noexcept { return id_; }
        const std::string& profile() const noexcept { return profile_; }
        const EnvConfig& env() const noexcept { return env_; }
        const RewardWeights& weights() const noexcept { return env_.weights; }
        const Hyperparams& hyperparams() const noexcept { return hp_; }
        const TrainingMeta& meta() const noexcept { return meta_; }
        TrainingMeta& meta() noexcept { return meta_; }

        DecomposedQ decomposedQ(const Observation& obs) const;
        ActionTotals totals(const Observation& obs) const;
        double stateValue(const Observation& obs) const;
        Action act(const Observation& obs) const;

        void trainStep(const Observation& obs, Action action, const RewardVector& reward, const Observation& next,
                       bool terminated);

        const DecomposedTable<kNumComponents, kNumActions>& table() const noexcept { return table_; }
        DecomposedTable<kNumComponents, kNumActions>& table() noexcept { return table_; }

        bool operator==(const AgentModel&) const = default;

    private:
        std::string id_;
        std::string profile_;
        EnvConfig env_;
        Hyperparams hp_;
        TrainingMeta meta_;
        DecomposedTable<kNumComponents, kNumActions> table_;
    };

    // V(s) = 0 for terminal states, max_a sum_c Q_c(s, a) otherwise.
    double stateValueAt(const AgentModel& model, const HighwayEnv& env, const SimState& state);

    // epsilon-greedy tabular training; deterministic in hp.seed.
    AgentModel train(const EnvConfig& env, const Hyperparams& hp, std::string id = "agent",
                     std::string profile = "custom");

    struct BehaviorStats
    {
        int episodes = 0;
        std::uint64_t steps = 0;
        double right_most_occupancy = 0.0;  // fraction of steps ending in lane L-1
        double mean_speed = 0.0;            // m/s
        double lane_change_rate = 0.0;      // lane changes per step
        double collision_rate = 0.0;        // fraction of episodes ending in a collision
        double mean_return = 0.0;
    };

    BehaviorStats evaluateGreedy(const AgentModel& model, int episodes, std::uint64_t base_seed);

    class CheckpointError : public std::runtime_error
    {
    public:
        enum class Kind
        {
            Missing,
            Malformed,
            VersionMismatch,
            Io,
        };

        CheckpointError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
        Kind kind() const noexcept { return kind_; }

    private:
        Kind kind_;
    };

    inline constexpr int kCheckpointVersion = 1;

    void saveAgent(const AgentModel& model, const std::filesystem::path& path);
    AgentModel loadAgent(const std::filesystem::path& path);
}
