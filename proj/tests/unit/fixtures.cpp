#include "fixtures.hpp"

#include <atomic>
#include <map>
#include <mutex>
#include <random>

#include <unistd.h>

namespace coviz::test
{
    const AgentModel& studyAgent(const std::string& profile)
    {
        static std::mutex mutex;
        static std::map<std::string, AgentModel> cache;
        std::lock_guard lock(mutex);
        auto it = cache.find(profile);
        if (it == cache.end())
        {
            EnvConfig env;
            env.weights = findProfile(profile).value().weights;
            it = cache.emplace(profile, train(env, Hyperparams{}, profile, profile)).first;
        }
        return it->second;
    }

    const SmallRun& smallRun()
    {
        static const SmallRun run = [] {
            SmallRun r;
            r.config.nsim = 24;
            const AgentModel& model = studyAgent("agent1");
            const HighwayEnv env(model.env());
            r.traces = collectTraces(model, env, r.config.nsim, r.config.base_seed);
            r.pairs = generateCFPairs(model, env, r.traces, r.config);
            return r;
        }();
        return run;
    }

    TempDir::TempDir(const std::string& tag)
    {
        static std::atomic<int> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                ("coviz-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }

    TempDir::~TempDir()
    {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }

    const std::filesystem::path& sharedRunDir()
    {
        static TempDir dir("shared-run");
        static const bool built = [] {
            RunConfig config;
            config.coviz.nsim = 40;
            runFullPipeline(RunLayout(dir.path()), config, false);
            return true;
        }();
        (void)built;
        return dir.path();
    }

    std::filesystem::path goldenDir()
    {
        return COVIZ_GOLDEN_DIR;
    }
}
