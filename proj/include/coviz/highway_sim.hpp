#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace coviz
{
    class ConfigError : public std::runtime_error
    {
    public:
        using std::runtime_error::runtime_error;
    };

    // Raised when an operation is called outside its precondition (stepping a
    // terminal state, rolling out from a terminal origin, ...).
    class UsageError : public std::logic_error
    {
    public:
        using std::logic_error::logic_error;
    };

    enum class Action : std::uint8_t
    {
        LaneLeft = 0,
        Idle = 1,
        LaneRight = 2,
        Faster = 3,
        Slower = 4,
    };

    inline constexpr std::size_t kNumActions = 5;
    inline constexpr std::array<Action, kNumActions> kAllActions{
        Action::LaneLeft, Action::Idle, Action::LaneRight, Action::Faster, Action::Slower};

    constexpr std::size_t ordinal(Action a) noexcept { return static_cast<std::size_t>(a); }
    Action actionFromOrdinal(std::size_t ordinal);
    std::string_view actionName(Action a) noexcept;
    // Accepts the snake_case names ("lane_left", "faster", ...) and ordinals ("0".."4").
    std::optional<Action> parseAction(std::string_view text) noexcept;

    /// Portable seeded stream. The whole generator state is one 64-bit word so
    /// it can be copied into every snapshot; uniform draws use the high bits
    /// only and never go through implementation-defined std distributions.
    class SimRng
    {
    public:
        SimRng() = default;
        explicit SimRng(std::uint64_t seed);

        static SimRng fromState(std::uint64_t state) noexcept;

        std::uint64_t next() noexcept;
        double uniform() noexcept;  // [0, 1)
        double uniform(double lo, double hi) noexcept;
        int index(int n) noexcept;  // [0, n)

        std::uint64_t state() const noexcept { return state_; }

        bool operator==(const SimRng&) const = default;

    private:
        std::uint64_t state_ = 0;
    };

    // Deterministic seed derivation for independent streams (training episodes,
    // exploration, evaluation, ...).
    std::uint64_t deriveSeed(std::uint64_t base, std::uint64_t stream, std::uint64_t index);

    struct Vehicle
    {
        int lane = 0;
        double x = 0.0;
        // Index into EnvConfig::speeds for the ego, EnvConfig::traffic_speeds for others.
        int speed_level = 0;

        bool operator==(const Vehicle&) const = default;
    };

    struct SimState
    {
        Vehicle ego;
        std::vector<Vehicle> others;
        int step_index = 0;
        bool collided = false;
        std::uint64_t rng_state = 0;

        bool operator==(const SimState&) const = default;
    };

    struct RewardWeights
    {
        double cl = 3.0;
        double hs = 1.0;
        double rml = 8.0;
        double col = -3.0;

        bool operator==(const RewardWeights&) const = default;
    };

    struct RewardVector
    {
        double cl = 0.0;
        double hs = 0.0;
        double rml = 0.0;
        double col = 0.0;

        std::array<double, 4> asArray() const noexcept { return {cl, hs, rml, col}; }
        double total() const noexcept { return ((cl + hs) + rml) + col; }

        bool operator==(const RewardVector&) const = default;
    };

    struct EnvConfig
    {
        int lanes = 4;
        int other_vehicles = 12;
        std::vector<double> speeds{20.0, 25.0, 30.0};
        // Other vehicles drive at one of these constant speeds.
        std::vector<double> traffic_speeds{15.0, 16.0, 18.0};
        int episode_cap = 80;
        double car_length = 5.0;
        double dt = 1.0;

        int ego_start_lane = 0;
        int ego_start_speed_level = 1;

        // Placement of other vehicles, in meters relative to the ego.
        double spawn_min = 20.0;
        double spawn_max = 500.0;
        double respawn_min = 350.0;
        double respawn_max = 500.0;
        double despawn_behind = 40.0;
        double min_spawn_gap = 12.0;
        int spawn_attempts = 8;

        // Observation windows.
        double lookahead_ahead = 40.0;
        double lookahead_behind = 5.0;

        RewardWeights weights{};

        void validate() const;

        bool operator==(const EnvConfig&) const = default;
    };

    struct Observation
    {
        int ego_lane = 0;
        int ego_speed_level = 0;
        // ahead-left, ahead-same, ahead-right, behind-left, behind-same, behind-right
        std::array<bool, 6> occupancy{};
        bool at_right_most = false;

        enum Slot : std::size_t
        {
            AheadLeft = 0,
            AheadSame = 1,
            AheadRight = 2,
            BehindLeft = 3,
            BehindSame = 4,
            BehindRight = 5,
        };

        std::uint32_t key() const noexcept;
        static Observation fromKey(std::uint32_t key) noexcept;
        std::string label() const;
        static std::optional<Observation> fromLabel(std::string_view label);

        bool operator==(const Observation&) const = default;
    };

    struct StepResult
    {
        SimState next;
        RewardVector reward;
        bool terminated = false;
    };

    class HighwayEnv
    {
    public:
        explicit HighwayEnv(EnvConfig config);

        const EnvConfig& config() const noexcept { return config_; }

        SimState reset(std::uint64_t seed) const;
        StepResult step(const SimState& state, Action action) const;
        RewardVector computeReward(const SimState& prev, Action action, const SimState& next) const;
        Observation observe(const SimState& state) const;

        bool isTerminal(const SimState& state) const noexcept;
        double egoSpeed(const SimState& state) const;
        double trafficSpeed(const Vehicle& v) const;

        // States s_0 .. s_n for the n given actions.
        std::vector<SimState> replayTrace(std::uint64_t seed, std::span<const Action> actions) const;

    private:
        bool placeVehicle(SimRng& rng, const SimState& state, std::size_t skip, double lo, double hi,
                          Vehicle& out) const;

        EnvConfig config_;
    };
}
