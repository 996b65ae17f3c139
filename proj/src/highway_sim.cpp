#include "coviz/highway_sim.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <random>
#include <sstream>

namespace coviz
{
    namespace
    {
        // Knuth's MMIX multiplier/increment; output is the full 64-bit state.
        using Lcg64 = std::linear_congruential_engine<std::uint64_t, 6364136223846793005ULL,
                                                      1442695040888963407ULL, 0ULL>;

        constexpr std::array<std::string_view, kNumActions> kActionNames{
            "lane_left", "idle", "lane_right", "faster", "slower"};

        bool sameLaneConflict(const Vehicle& a, const Vehicle& b, double gap)
        {
            return a.lane == b.lane && std::abs(a.x - b.x) < gap;
        }
    }

    Action actionFromOrdinal(std::size_t ordinal)
    {
        if (ordinal >= kNumActions)
        {
            throw std::out_of_range("action ordinal out of range: " + std::to_string(ordinal));
        }
        return static_cast<Action>(ordinal);
    }

    std::string_view actionName(Action a) noexcept
    {
        return kActionNames[ordinal(a)];
    }

    std::optional<Action> parseAction(std::string_view text) noexcept
    {
        for (std::size_t i = 0; i < kNumActions; ++i)
        {
            if (text == kActionNames[i])
            {
                return static_cast<Action>(i);
            }
        }
        if (text == "left")
            return Action::LaneLeft;
        if (text == "right")
            return Action::LaneRight;
        if (text.size() == 1 && text[0] >= '0' && text[0] <= '4')
        {
            return static_cast<Action>(text[0] - '0');
        }
        return std::nullopt;
    }

    SimRng::SimRng(std::uint64_t seed)
    {
        std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)};
        std::array<std::uint32_t, 2> words{};
        seq.generate(words.begin(), words.end());
        state_ = (static_cast<std::uint64_t>(words[0]) << 32) | words[1];
    }

    SimRng SimRng::fromState(std::uint64_t state) noexcept
    {
        SimRng rng;
        rng.state_ = state;
        return rng;
    }

    std::uint64_t SimRng::next() noexcept
    {
        // The engine's seed() maps 0 to 0 (increment is non-zero), so seeding
        // with the current state and drawing once advances exactly one step.
        Lcg64 engine(state_);
        state_ = engine();
        return state_;
    }

    double SimRng::uniform() noexcept
    {
        return static_cast<double>(next() >> 11) * 0x1.0p-53;
    }

    double SimRng::uniform(double lo, double hi) noexcept
    {
        return lo + (hi - lo) * uniform();
    }

    int SimRng::index(int n) noexcept
    {
        if (n <= 1)
        {
            next();
            return 0;
        }
        return static_cast<int>((next() >> 32) % static_cast<std::uint64_t>(n));
    }

    std::uint64_t deriveSeed(std::uint64_t base, std::uint64_t stream, std::uint64_t index)
    {
        std::seed_seq seq{static_cast<std::uint32_t>(base), static_cast<std::uint32_t>(base >> 32),
                          static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(index),
                          static_cast<std::uint32_t>(index >> 32)};
        std::array<std::uint32_t, 2> words{};
        seq.generate(words.begin(), words.end());
        return (static_cast<std::uint64_t>(words[0]) << 32) | words[1];
    }

    void EnvConfig::validate() const
    {
        if (lanes < 2)
            throw ConfigError("env.lanes must be >= 2");
        if (other_vehicles < 0)
            throw ConfigError("env.other_vehicles must be >= 0");
        if (speeds.empty())
            throw ConfigError("env.speeds must not be empty");
        if (traffic_speeds.empty())
            throw ConfigError("env.traffic_speeds must not be empty");
        for (std::size_t i = 1; i < speeds.size(); ++i)
        {
            if (!(speeds[i] > speeds[i - 1]))
                throw ConfigError("env.speeds must be strictly increasing");
        }
        if (speeds.size() > 255)
            throw ConfigError("env.speeds supports at most 255 levels");
        if (episode_cap < 1)
            throw ConfigError("env.episode_cap must be >= 1");
        if (!(car_length > 0.0))
            throw ConfigError("env.car_length must be > 0");
        if (!(dt > 0.0))
            throw ConfigError("env.dt must be > 0");
        if (ego_start_lane < 0 || ego_start_lane >= lanes)
            throw ConfigError("env.ego_start_lane out of range");
        if (ego_start_speed_level < 0 || ego_start_speed_level >= static_cast<int>(speeds.size()))
            throw ConfigError("env.ego_start_speed_level out of range");
        if (spawn_max < spawn_min || respawn_max < respawn_min)
            throw ConfigError("env spawn ranges must satisfy min <= max");
        if (spawn_min < car_length)
            throw ConfigError("env.spawn_min must be >= car_length");
        if (!(despawn_behind > 0.0))
            throw ConfigError("env.despawn_behind must be > 0");
        if (spawn_attempts < 1)
            throw ConfigError("env.spawn_attempts must be >= 1");
        if (!(weights.col < 0.0))
            throw ConfigError("collision weight must be negative");
        if (weights.cl < 0.0 || weights.hs < 0.0 || weights.rml < 0.0)
            throw ConfigError("lane-change, speed and right-lane weights must be non-negative");
    }

    std::uint32_t Observation::key() const noexcept
    {
        std::uint32_t bits = 0;
        for (std::size_t i = 0; i < occupancy.size(); ++i)
        {
            bits |= static_cast<std::uint32_t>(occupancy[i]) << i;
        }
        return (static_cast<std::uint32_t>(ego_lane) << 16) | (static_cast<std::uint32_t>(ego_speed_level) << 8) |
               (bits << 1) | static_cast<std::uint32_t>(at_right_most);
    }

    Observation Observation::fromKey(std::uint32_t key) noexcept
    {
        Observation obs;
        obs.ego_lane = static_cast<int>(key >> 16);
        obs.ego_speed_level = static_cast<int>((key >> 8) & 0xFFu);
        const std::uint32_t bits = (key >> 1) & 0x3Fu;
        for (std::size_t i = 0; i < obs.occupancy.size(); ++i)
        {
            obs.occupancy[i] = ((bits >> i) & 1u) != 0;
        }
        obs.at_right_most = (key & 1u) != 0;
        return obs;
    }

    std::string Observation::label() const
    {
        std::string out = "l" + std::to_string(ego_lane) + "-s" + std::to_string(ego_speed_level) + "-o";
        for (bool b : occupancy)
        {
            out.push_back(b ? '1' : '0');
        }
        out += at_right_most ? "-r1" : "-r0";
        return out;
    }

    std::optional<Observation> Observation::fromLabel(std::string_view label)
    {
        // l<lane>-s<speed>-o<6 bits>-r<0|1>
        Observation obs;
        auto parseInt = [](std::string_view s, int& out) {
            auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
            return ec == std::errc{} && ptr == s.data() + s.size() && out >= 0;
        };
        if (label.size() < 2 || label[0] != 'l')
            return std::nullopt;
        const auto sPos = label.find("-s");
        const auto oPos = label.find("-o");
        const auto rPos = label.find("-r");
        if (sPos == std::string_view::npos || oPos == std::string_view::npos || rPos == std::string_view::npos ||
            !(sPos < oPos && oPos < rPos))
            return std::nullopt;
        if (!parseInt(label.substr(1, sPos - 1), obs.ego_lane))
            return std::nullopt;
        if (!parseInt(label.substr(sPos + 2, oPos - sPos - 2), obs.ego_speed_level))
            return std::nullopt;
        const auto bits = label.substr(oPos + 2, rPos - oPos - 2);
        if (bits.size() != 6)
            return std::nullopt;
        for (std::size_t i = 0; i < 6; ++i)
        {
            if (bits[i] != '0' && bits[i] != '1')
                return std::nullopt;
            obs.occupancy[i] = bits[i] == '1';
        }
        const auto rm = label.substr(rPos + 2);
        if (rm != "0" && rm != "1")
            return std::nullopt;
        obs.at_right_most = rm == "1";
        return obs;
    }

    HighwayEnv::HighwayEnv(EnvConfig config) : config_(std::move(config))
    {
        config_.validate();
    }

    bool HighwayEnv::placeVehicle(SimRng& rng, const SimState& state, std::size_t skip, double lo, double hi,
                                  Vehicle& out) const
    {
        const double gap = std::max(config_.min_spawn_gap, config_.car_length);
        for (int attempt = 0; attempt < config_.spawn_attempts; ++attempt)
        {
            out.lane = rng.index(config_.lanes);
            out.x = state.ego.x + rng.uniform(lo, hi);
            out.speed_level = rng.index(static_cast<int>(config_.traffic_speeds.size()));

            bool clear = !sameLaneConflict(out, state.ego, gap);
            for (std::size_t j = 0; clear && j < state.others.size(); ++j)
            {
                if (j != skip && sameLaneConflict(out, state.others[j], gap))
                    clear = false;
            }
            if (clear)
                return true;
        }
        // Keep the last draw; other vehicles do not interact with each other.
        return false;
    }

    SimState HighwayEnv::reset(std::uint64_t seed) const
    {
        SimState state;
        state.ego.lane = config_.ego_start_lane;
        state.ego.x = 0.0;
        state.ego.speed_level = config_.ego_start_speed_level;

        SimRng rng(seed);
        state.others.reserve(static_cast<std::size_t>(config_.other_vehicles));
        for (int i = 0; i < config_.other_vehicles; ++i)
        {
            Vehicle v;
            placeVehicle(rng, state, state.others.size(), config_.spawn_min, config_.spawn_max, v);
            state.others.push_back(v);
        }
        state.rng_state = rng.state();
        return state;
    }

    double HighwayEnv::egoSpeed(const SimState& state) const
    {
        return config_.speeds.at(static_cast<std::size_t>(state.ego.speed_level));
    }

    double HighwayEnv::trafficSpeed(const Vehicle& v) const
    {
        return config_.traffic_speeds.at(static_cast<std::size_t>(v.speed_level));
    }

    bool HighwayEnv::isTerminal(const SimState& state) const noexcept
    {
        return state.collided || state.step_index >= config_.episode_cap;
    }

    StepResult HighwayEnv::step(const SimState& state, Action action) const
    {
        if (isTerminal(state))
        {
            throw UsageError("step() called on a terminal state (step " + std::to_string(state.step_index) + ")");
        }

        StepResult result;
        SimState& next = result.next;
        next = state;

        const int maxLevel = static_cast<int>(config_.speeds.size()) - 1;
        switch (action)
        {
        case Action::LaneLeft:
            next.ego.lane = std::max(0, next.ego.lane - 1);
            break;
        case Action::LaneRight:
            next.ego.lane = std::min(config_.lanes - 1, next.ego.lane + 1);
            break;
        case Action::Faster:
            next.ego.speed_level = std::min(maxLevel, next.ego.speed_level + 1);
            break;
        case Action::Slower:
            next.ego.speed_level = std::max(0, next.ego.speed_level - 1);
            break;
        case Action::Idle:
            break;
        }

        const double egoBefore = next.ego.x;
        next.ego.x += egoSpeed(next) * config_.dt;

        // Lane changes are instantaneous, so the swept check runs in the new lane
        // over the whole tick: a collision happens if the gap is ever below one
        // car length, including when one vehicle passes through the other.
        bool collided = false;
        for (Vehicle& other : next.others)
        {
            const double otherBefore = other.x;
            other.x += trafficSpeed(other) * config_.dt;
            if (other.lane != next.ego.lane)
                continue;
            const double gap0 = otherBefore - egoBefore;
            const double gap1 = other.x - next.ego.x;
            if (std::abs(gap0) < config_.car_length || std::abs(gap1) < config_.car_length ||
                (gap0 > 0.0) != (gap1 > 0.0))
            {
                collided = true;
            }
        }

        SimRng rng = SimRng::fromState(next.rng_state);
        for (std::size_t i = 0; i < next.others.size(); ++i)
        {
            if (next.others[i].x - next.ego.x < -config_.despawn_behind)
            {
                Vehicle v;
                placeVehicle(rng, next, i, config_.respawn_min, config_.respawn_max, v);
                next.others[i] = v;
            }
        }
        next.rng_state = rng.state();

        next.collided = collided;
        next.step_index = state.step_index + 1;
        result.reward = computeReward(state, action, next);
        result.terminated = isTerminal(next);
        return result;
    }

    RewardVector HighwayEnv::computeReward(const SimState& prev, Action /*action*/, const SimState& next) const
    {
        const RewardWeights& w = config_.weights;
        RewardVector r;
        r.cl = next.ego.lane != prev.ego.lane ? w.cl : 0.0;
        const double vMin = config_.speeds.front();
        const double vMax = config_.speeds.back();
        const double frac = vMax > vMin ? (egoSpeed(next) - vMin) / (vMax - vMin) : 0.0;
        r.hs = w.hs * frac;
        r.rml = next.ego.lane == config_.lanes - 1 ? w.rml : 0.0;
        r.col = next.collided ? w.col : 0.0;
        return r;
    }

    Observation HighwayEnv::observe(const SimState& state) const
    {
        Observation obs;
        obs.ego_lane = state.ego.lane;
        obs.ego_speed_level = state.ego.speed_level;
        obs.at_right_most = state.ego.lane == config_.lanes - 1;
        for (const Vehicle& other : state.others)
        {
            const int dl = other.lane - state.ego.lane;
            if (dl < -1 || dl > 1)
                continue;
            const double dx = other.x - state.ego.x;
            const std::size_t column = static_cast<std::size_t>(dl + 1);
            if (dx >= 0.0 && dx <= config_.lookahead_ahead)
            {
                obs.occupancy[Observation::AheadLeft + column] = true;
            }
            else if (dx < 0.0 && dx >= -config_.lookahead_behind)
            {
                obs.occupancy[Observation::BehindLeft + column] = true;
            }
        }
        return obs;
    }

    std::vector<SimState> HighwayEnv::replayTrace(std::uint64_t seed, std::span<const Action> actions) const
    {
        std::vector<SimState> states;
        states.reserve(actions.size() + 1);
        states.push_back(reset(seed));
        for (std::size_t i = 0; i < actions.size(); ++i)
        {
            if (isTerminal(states.back()))
            {
                throw UsageError("replayTrace: action " + std::to_string(i) + " applied past termination");
            }
            states.push_back(step(states.back(), actions[i]).next);
        }
        return states;
    }
}
