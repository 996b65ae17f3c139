#include "coviz/hra_agent.hpp"

#include "coviz/serialize.hpp"

#include <fstream>
#include <sstream>

namespace coviz
{
    ActionTotals totalQ(const DecomposedQ& q) noexcept
    {
        return actionTotals(q);
    }

    Action greedyAction(const DecomposedQ& q) noexcept
    {
        return static_cast<Action>(argmaxIndex(totalQ(q)));
    }

    std::array<Action, kNumActions> rankedActions(const DecomposedQ& q)
    {
        const auto order = rankIndices(totalQ(q));
        std::array<Action, kNumActions> ranked{};
        for (std::size_t i = 0; i < kNumActions; ++i)
        {
            ranked[i] = static_cast<Action>(order[i]);
        }
        return ranked;
    }

    std::array<double, kNumComponents> headRewards(const RewardVector& r, CollisionHead mode) noexcept
    {
        if (mode == CollisionHead::FoldUniform)
        {
            const double share = r.col / 3.0;
            return {r.cl + share, r.hs + share, r.rml + share, 0.0};
        }
        return r.asArray();
    }

    const std::vector<RewardProfile>& studyProfiles()
    {
        static const std::vector<RewardProfile> profiles{
            {"agent1", RewardWeights{3.0, 1.0, 8.0, -3.0}},
            {"agent2", RewardWeights{5.0, 8.0, 1.0, -3.0}},
            {"agent3", RewardWeights{8.0, 1.0, 5.0, -3.0}},
        };
        return profiles;
    }

    std::optional<RewardProfile> findProfile(std::string_view name)
    {
        for (const auto& p : studyProfiles())
        {
            if (p.name == name)
                return p;
        }
        return std::nullopt;
    }

    void Hyperparams::validate() const
    {
        if (!(alpha > 0.0 && alpha <= 1.0))
            throw ConfigError("train.alpha must be in (0, 1]");
        if (!(gamma >= 0.0 && gamma < 1.0))
            throw ConfigError("train.gamma must be in [0, 1)");
        if (!(epsilon_start >= 0.0 && epsilon_start <= 1.0) || !(epsilon_end >= 0.0 && epsilon_end <= 1.0))
            throw ConfigError("train.epsilon values must be in [0, 1]");
        if (episodes < 0)
            throw ConfigError("train.episodes must be >= 0");
        if (epsilon_decay_episodes && *epsilon_decay_episodes < 0)
            throw ConfigError("train.epsilon_decay_episodes must be >= 0");
    }

    int Hyperparams::decayEpisodes() const noexcept
    {
        if (epsilon_decay_episodes)
            return *epsilon_decay_episodes;
        return static_cast<int>(static_cast<long long>(episodes) * 4 / 5);
    }

    double Hyperparams::epsilonAt(int episode) const noexcept
    {
        const int decay = decayEpisodes();
        if (decay <= 0 || episode >= decay)
            return epsilon_end;
        const double frac = static_cast<double>(episode) / static_cast<double>(decay);
        return epsilon_start + (epsilon_end - epsilon_start) * frac;
    }

    AgentModel::AgentModel(std::string id, std::string profile, EnvConfig env, Hyperparams hp)
        : id_(std::move(id)), profile_(std::move(profile)), env_(std::move(env)), hp_(hp)
    {
        env_.validate();
        hp_.validate();
        hp_.epsilon_decay_episodes = hp_.decayEpisodes();
    }

    DecomposedQ AgentModel::decomposedQ(const Observation& obs) const
    {
        return table_.values(obs.key());
    }

    ActionTotals AgentModel::totals(const Observation& obs) const
    {
        return totalQ(decomposedQ(obs));
    }

    double AgentModel::stateValue(const Observation& obs) const
    {
        const ActionTotals t = totals(obs);
        return t[argmaxIndex(t)];
    }

    Action AgentModel::act(const Observation& obs) const
    {
        return greedyAction(decomposedQ(obs));
    }

    void AgentModel::trainStep(const Observation& obs, Action action, const RewardVector& reward,
                               const Observation& next, bool terminated)
    {
        table_.update(obs.key(), ordinal(action), headRewards(reward, hp_.collision_head), next.key(), terminated,
                      hp_.alpha, hp_.gamma);
    }

    double stateValueAt(const AgentModel& model, const HighwayEnv& env, const SimState& state)
    {
        if (env.isTerminal(state))
            return 0.0;
        return model.stateValue(env.observe(state));
    }

    AgentModel train(const EnvConfig& envConfig, const Hyperparams& hp, std::string id, std::string profile)
    {
        AgentModel model(std::move(id), std::move(profile), envConfig, hp);
        const HighwayEnv env(envConfig);
        SimRng explore(deriveSeed(hp.seed, 1, 0));

        TrainingMeta& meta = model.meta();
        for (int episode = 0; episode < hp.episodes; ++episode)
        {
            const double epsilon = hp.epsilonAt(episode);
            SimState state = env.reset(deriveSeed(hp.seed, 2, static_cast<std::uint64_t>(episode)));
            Observation obs = env.observe(state);
            bool done = env.isTerminal(state);
            while (!done)
            {
                Action action = model.act(obs);
                if (explore.uniform() < epsilon)
                    action = actionFromOrdinal(static_cast<std::size_t>(explore.index(kNumActions)));

                StepResult result = env.step(state, action);
                const Observation nextObs = env.observe(result.next);
                model.trainStep(obs, action, result.reward, nextObs, result.terminated);

                ++meta.env_steps;
                if (result.next.collided)
                    ++meta.collisions;
                done = result.terminated;
                state = std::move(result.next);
                obs = nextObs;
            }
            ++meta.episodes_run;
        }
        return model;
    }

    BehaviorStats evaluateGreedy(const AgentModel& model, int episodes, std::uint64_t baseSeed)
    {
        const HighwayEnv env(model.env());
        BehaviorStats stats;
        stats.episodes = episodes;
        double rightMost = 0.0;
        double speed = 0.0;
        double laneChanges = 0.0;
        double returns = 0.0;
        int collisions = 0;
        for (int episode = 0; episode < episodes; ++episode)
        {
            SimState state = env.reset(deriveSeed(baseSeed, 3, static_cast<std::uint64_t>(episode)));
            while (!env.isTerminal(state))
            {
                const Action action = model.act(env.observe(state));
                StepResult result = env.step(state, action);
                ++stats.steps;
                rightMost += result.next.ego.lane == env.config().lanes - 1 ? 1.0 : 0.0;
                speed += env.egoSpeed(result.next);
                laneChanges += result.next.ego.lane != state.ego.lane ? 1.0 : 0.0;
                returns += result.reward.total();
                if (result.next.collided)
                    ++collisions;
                state = std::move(result.next);
            }
        }
        if (stats.steps > 0)
        {
            const double n = static_cast<double>(stats.steps);
            stats.right_most_occupancy = rightMost / n;
            stats.mean_speed = speed / n;
            stats.lane_change_rate = laneChanges / n;
        }
        if (episodes > 0)
        {
            stats.collision_rate = static_cast<double>(collisions) / episodes;
            stats.mean_return = returns / episodes;
        }
        return stats;
    }

    void saveAgent(const AgentModel& model, const std::filesystem::path& path)
    {
        json tables = json::object();
        for (std::size_t c = 0; c < kNumComponents; ++c)
        {
            json rows = json::object();
            for (const auto& [key, q] : model.table().entries())
            {
                rows[Observation::fromKey(key).label()] = q[c];
            }
            tables[std::string(kComponentLabels[c])] = std::move(rows);
        }

        const json doc{{"format", "coviz-agent"},
                       {"version", kCheckpointVersion},
                       {"id", model.id()},
                       {"profile", model.profile()},
                       {"env", model.env()},
                       {"hyperparams", model.hyperparams()},
                       {"meta", model.meta()},
                       {"components", kComponentLabels},
                       {"tables", std::move(tables)}};

        if (path.has_parent_path())
            std::filesystem::create_directories(path.parent_path());
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        if (!out)
            throw CheckpointError(CheckpointError::Kind::Io, "cannot write checkpoint: " + path.string());
        out << doc.dump(1) << '\n';
        if (!out)
            throw CheckpointError(CheckpointError::Kind::Io, "failed writing checkpoint: " + path.string());
    }

    AgentModel loadAgent(const std::filesystem::path& path)
    {
        std::ifstream in(path, std::ios::binary);
        if (!in)
            throw CheckpointError(CheckpointError::Kind::Missing, "checkpoint not found: " + path.string());

        json doc;
        try
        {
            doc = json::parse(in);
        }
        catch (const json::parse_error& e)
        {
            throw CheckpointError(CheckpointError::Kind::Malformed,
                                  "malformed checkpoint " + path.string() + ": " + e.what());
        }

        try
        {
            if (doc.at("format").get<std::string>() != "coviz-agent")
                throw CheckpointError(CheckpointError::Kind::Malformed, "not an agent checkpoint: " + path.string());
            const int version = doc.at("version").get<int>();
            if (version != kCheckpointVersion)
            {
                throw CheckpointError(CheckpointError::Kind::VersionMismatch,
                                      "checkpoint version " + std::to_string(version) + " unsupported (expected " +
                                          std::to_string(kCheckpointVersion) + ")");
            }

            AgentModel model(doc.at("id").get<std::string>(), doc.at("profile").get<std::string>(),
                             doc.at("env").get<EnvConfig>(), doc.at("hyperparams").get<Hyperparams>());
            model.meta() = doc.at("meta").get<TrainingMeta>();

            std::map<std::uint32_t, DecomposedQ> rows;
            std::map<std::uint32_t, std::size_t> seen;
            const json& tables = doc.at("tables");
            for (std::size_t c = 0; c < kNumComponents; ++c)
            {
                for (const auto& [label, values] : tables.at(std::string(kComponentLabels[c])).items())
                {
                    const auto obs = Observation::fromLabel(label);
                    if (!obs)
                        throw CheckpointError(CheckpointError::Kind::Malformed, "bad observation key: " + label);
                    if (!values.is_array() || values.size() != kNumActions)
                        throw CheckpointError(CheckpointError::Kind::Malformed,
                                              "observation " + label + " must hold 5 Q-values");
                    auto& row = rows[obs->key()][c];
                    for (std::size_t a = 0; a < kNumActions; ++a)
                    {
                        row[a] = values[a].get<double>();
                    }
                    ++seen[obs->key()];
                }
            }
            for (const auto& [key, count] : seen)
            {
                if (count != kNumComponents)
                    throw CheckpointError(CheckpointError::Kind::Malformed,
                                          "observation " + Observation::fromKey(key).label() +
                                              " missing a component table");
            }
            for (const auto& [key, q] : rows)
            {
                model.table().set(key, q);
            }
            return model;
        }
        catch (const CheckpointError&)
        {
            throw;
        }
        catch (const std::exception& e)
        {
            throw CheckpointError(CheckpointError::Kind::Malformed,
                                  "malformed checkpoint " + path.string() + ": " + e.what());
        }
    }
}
