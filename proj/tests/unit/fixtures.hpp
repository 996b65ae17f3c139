#pragma once

#include "coviz/api_service.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace coviz::test
{
    inline EnvConfig emptyRoad()
    {
        EnvConfig c;
        c.other_vehicles = 0;
        return c;
    }

    inline SimState handState(Vehicle ego, std::vector<Vehicle> others = {}, int step = 0)
    {
        SimState s;
        s.ego = ego;
        s.others = std::move(others);
        s.step_index = step;
        s.rng_state = 0x1234;
        return s;
    }

    inline DecomposedQ qWithTotals(const std::array<double, kNumActions>& totals)
    {
        DecomposedQ q{};
        for (std::size_t a = 0; a < kNumActions; ++a)
        {
            q[0][a] = totals[a];
        }
        return q;
    }

    // Every observation of the default 4-lane, 3-speed configuration.
    inline std::vector<Observation> allObservations()
    {
        std::vector<Observation> out;
        for (int lane = 0; lane < 4; ++lane)
            for (int speed = 0; speed < 3; ++speed)
                for (unsigned bits = 0; bits < 64; ++bits)
                {
                    Observation o;
                    o.ego_lane = lane;
                    o.ego_speed_level = speed;
                    for (std::size_t i = 0; i < 6; ++i)
                        o.occupancy[i] = ((bits >> i) & 1u) != 0;
                    o.at_right_most = lane == 3;
                    out.push_back(o);
                }
        return out;
    }

    // Study agent trained once per process with the default configuration.
    const AgentModel& studyAgent(const std::string& profile);

    // Traces and pairs of agent1 on a reduced number of simulations.
    struct SmallRun
    {
        CovizConfig config;
        std::vector<Trace> traces;
        std::vector<CFPair> pairs;
    };
    const SmallRun& smallRun();

    // Fresh directory under the system temp dir, removed on destruction.
    class TempDir
    {
    public:
        explicit TempDir(const std::string& tag);
        ~TempDir();
        TempDir(const TempDir&) = delete;
        TempDir& operator=(const TempDir&) = delete;

        const std::filesystem::path& path() const noexcept { return path_; }

    private:
        std::filesystem::path path_;
    };

    // A run directory with trained study agents, traces, pairs and default
    // summaries, built once per process (read-only for tests).
    const std::filesystem::path& sharedRunDir();

    std::filesystem::path goldenDir();
}
