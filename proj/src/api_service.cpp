#include "coviz/api_service.hpp"

#include <httplib.h>

#include <charconv>
#include <chrono>
#include <cstdio>
#include <thread>

namespace coviz
{
    namespace
    {
        HttpResponse jsonResponse(int status, const json& body)
        {
            return HttpResponse{status, body.dump(), "application/json"};
        }

        HttpResponse errorResponse(int status, const std::string& message)
        {
            return jsonResponse(status, json{{"status", status}, {"error", message}});
        }

        std::vector<std::string> splitPath(std::string_view path)
        {
            std::vector<std::string> parts;
            while (!path.empty())
            {
                const auto slash = path.find('/');
                const auto part = path.substr(0, slash);
                if (!part.empty())
                    parts.emplace_back(part);
                if (slash == std::string_view::npos)
                    break;
                path.remove_prefix(slash + 1);
            }
            return parts;
        }

        template <typename T>
        std::optional<T> parseNumber(std::string_view text)
        {
            T value{};
            const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
            if (ec != std::errc{} || ptr != text.data() + text.size())
                return std::nullopt;
            return value;
        }

        std::string pairsJsonl(const std::vector<CFPair>& pairs)
        {
            std::string out;
            for (const CFPair& p : pairs)
            {
                out += canonicalDump(pairToJson(p));
                out += '\n';
            }
            return out;
        }

        std::string payloadLink(const CFPair& pair)
        {
            return "/api/traces/" + pair.trace_id + "/steps/" + std::to_string(pair.origin_index) +
                   "/counterfactual?action=" + std::string(actionName(pair.foil_action)) +
                   "&k=" + std::to_string(pair.k());
        }
    }

    ArtifactStore ArtifactStore::load(const std::filesystem::path& root)
    {
        if (!std::filesystem::is_directory(root))
            throw DataError("artifact directory " + root.string() + " does not exist");
        const RunLayout layout(root);
        if (std::filesystem::exists(layout.manifest()))
            verifyManifest(layout);

        ArtifactStore store;
        store.config_ = resolveRunConfig(layout, std::nullopt);
        for (const std::string& id : layout.agentIds())
        {
            AgentEntry entry;
            try
            {
                entry.model = loadAgent(layout.agentFile(id));
            }
            catch (const CheckpointError& e)
            {
                throw DataError(std::string("agent ") + id + ": " + e.what());
            }
            if (entry.model.id() != id)
                throw DataError("checkpoint " + layout.agentFile(id).string() + " holds agent '" +
                                entry.model.id() + "'");

            std::vector<Trace> traces;
            if (std::filesystem::is_directory(layout.tracesDir(id)))
                traces = readTraces(layout, id);
            std::string pairsText;
            if (std::filesystem::exists(layout.pairsFile(id)))
            {
                entry.pairs = readPairs(layout.pairsFile(id), traces);
                pairsText = readTextFile(layout.pairsFile(id));
            }
            else
            {
                const HighwayEnv env(entry.model.env());
                entry.pairs = generateCFPairs(entry.model, env, traces, store.config_.coviz);
                entry.pairs_generated = true;
                pairsText = pairsJsonl(entry.pairs);
            }
            entry.provenance = sha256Hex(fileSha256(layout.agentFile(id)) + sha256Hex(pairsText));

            for (Trace& t : traces)
            {
                if (t.agent_id != id)
                    throw DataError("trace " + t.trace_id + " filed under agent '" + id + "' belongs to '" +
                                    t.agent_id + "'");
                entry.trace_ids.push_back(t.trace_id);
                const std::string tid = t.trace_id;
                if (!store.traces_.emplace(tid, std::move(t)).second)
                    throw DataError("duplicate trace id " + tid);
            }
            store.agents_.emplace(id, std::move(entry));
        }
        return store;
    }

    const ArtifactStore::AgentEntry* ArtifactStore::agent(const std::string& id) const
    {
        const auto it = agents_.find(id);
        return it == agents_.end() ? nullptr : &it->second;
    }

    const Trace* ArtifactStore::trace(const std::string& traceId) const
    {
        const auto it = traces_.find(traceId);
        return it == traces_.end() ? nullptr : &it->second;
    }

    ApiService::ApiService(std::shared_ptr<const ArtifactStore> store) : store_(std::move(store))
    {
        if (!store_)
            throw std::invalid_argument("ApiService needs a store");
    }

    HttpResponse ApiService::handle(std::string_view method, std::string_view path, const QueryParams& query) const
    {
        if (method == "OPTIONS")
            return HttpResponse{204, "", "text/plain"};
        if (method != "GET" && method != "HEAD")
            return errorResponse(405, "only GET is supported");

        const auto parts = splitPath(path);
        if (parts.size() < 2 || parts[0] != "api")
            return errorResponse(404, "no route for " + std::string(path));

        try
        {
            if (parts.size() == 2 && parts[1] == "agents")
                return agents();
            if (parts.size() == 2 && parts[1] == "spec")
                return jsonResponse(200, openApiSpec());
            if (parts.size() == 2 && parts[1] == "summary")
                return summary(query);
            if (parts[1] == "traces")
            {
                if (parts.size() == 2)
                    return traces(query);
                if (parts.size() == 3)
                    return traceDetail(parts[2]);
                if (parts.size() == 5 && parts[3] == "steps")
                    return step(parts[2], parts[4], query);
                if (parts.size() == 6 && parts[3] == "steps" && parts[5] == "counterfactual")
                    return counterfactual(parts[2], parts[4], query);
            }
        }
        catch (const std::exception& e)
        {
            return errorResponse(500, e.what());
        }
        return errorResponse(404, "no route for " + std::string(path));
    }

    HttpResponse ApiService::agents() const
    {
        json list = json::array();
        for (const auto& [id, entry] : store_->agents())
        {
            const AgentModel& m = entry.model;
            list.push_back(json{{"id", id},
                                {"profile", m.profile()},
                                {"weights", m.weights()},
                                {"training", m.meta()},
                                {"hyperparams", m.hyperparams()},
                                {"traces", entry.trace_ids.size()},
                                {"pairs", entry.pairs.size()}});
        }
        return jsonResponse(200, json{{"agents", std::move(list)}});
    }

    HttpResponse ApiService::traces(const QueryParams& query) const
    {
        const auto it = query.find("agent");
        if (it == query.end())
            return errorResponse(400, "query parameter 'agent' is required");
        const auto* entry = store_->agent(it->second);
        if (!entry)
            return errorResponse(404, "unknown agent '" + it->second + "'");
        json list = json::array();
        for (const std::string& tid : entry->trace_ids)
        {
            const Trace& t = *store_->trace(tid);
            list.push_back(json{{"trace_id", tid},
                                {"length", t.steps.size()},
                                {"terminal_cause", terminalCauseName(t.cause)}});
        }
        return jsonResponse(200, json{{"agent_id", it->second}, {"traces", std::move(list)}});
    }

    HttpResponse ApiService::traceDetail(const std::string& traceId) const
    {
        const Trace* t = store_->trace(traceId);
        if (!t)
            return errorResponse(404, "unknown trace '" + traceId + "'");
        const int k = store_->config().coviz.k;
        json actions = json::array();
        json eligible = json::array();
        for (const TraceStep& s : t->steps)
        {
            actions.push_back(actionName(s.action));
            eligible.push_back(isEligibleOrigin(*t, s.index, k));
        }
        return jsonResponse(200, json{{"trace_id", t->trace_id},
                                      {"agent_id", t->agent_id},
                                      {"seed", t->seed},
                                      {"length", t->steps.size()},
                                      {"terminal_cause", terminalCauseName(t->cause)},
                                      {"k", k},
                                      {"eligible_origins", eligibleOriginCount(*t, k)},
                                      {"actions", std::move(actions)},
                                      {"eligible", std::move(eligible)}});
    }

    HttpResponse ApiService::step(const std::string& traceId, const std::string& index, const QueryParams& query) const
    {
        const Trace* t = store_->trace(traceId);
        if (!t)
            return errorResponse(404, "unknown trace '" + traceId + "'");
        const auto i = parseNumber<std::size_t>(index);
        if (!i || *i >= t->steps.size())
            return errorResponse(404, "trace " + traceId + " has no step " + index);
        int k = store_->config().coviz.k;
        if (const auto kt = query.find("k"); kt != query.end())
        {
            const auto parsed = parseNumber<int>(kt->second);
            if (!parsed || *parsed < 1)
                return errorResponse(400, "k must be a positive integer");
            k = *parsed;
        }
        return jsonResponse(200, traceStepJson(t->steps[*i], *t, k));
    }

    HttpResponse ApiService::counterfactual(const std::string& traceId, const std::string& index,
                                            const QueryParams& query) const
    {
        const Trace* t = store_->trace(traceId);
        if (!t)
            return errorResponse(404, "unknown trace '" + traceId + "'");
        const auto i = parseNumber<int>(index);
        if (!i || *i < 0 || static_cast<std::size_t>(*i) >= t->steps.size())
            return errorResponse(404, "trace " + traceId + " has no step " + index);
        const auto* entry = store_->agent(t->agent_id);
        if (!entry)
            return errorResponse(404, "agent '" + t->agent_id + "' is not loaded");

        ExplainRequest request;
        request.agent = t->agent_id;
        request.trace_id = traceId;
        request.origin = *i;
        request.k = 7;
        if (const auto kt = query.find("k"); kt != query.end())
        {
            const auto parsed = parseNumber<int>(kt->second);
            if (!parsed || *parsed < 1)
                return errorResponse(400, "k must be a positive integer");
            request.k = *parsed;
        }
        if (const auto at = query.find("action"); at != query.end() && at->second != "auto")
        {
            const auto action = parseAction(at->second);
            if (!action)
                return errorResponse(400, "unknown action '" + at->second + "'");
            request.foil = *action;
        }

        try
        {
            // Works on copies of the stored snapshot; the store is never touched.
            const CordPayload payload = explainOrigin(entry->model, *t, request, CfMethod::secondBest());
            return jsonResponse(200, toJson(payload));
        }
        catch (const InvalidFoilError& e)
        {
            return errorResponse(400, e.what());
        }
        catch (const IneligibleOriginError& e)
        {
            return errorResponse(422, e.what());
        }
        catch (const NotFoundError& e)
        {
            return errorResponse(404, e.what());
        }
    }

    HttpResponse ApiService::summary(const QueryParams& query) const
    {
        SummarizeRequest request;
        const RunConfig& cfg = store_->config();
        request.method = cfg.summary.method;
        request.n = cfg.summary.n;
        request.overlap = cfg.summary.overlap;
        request.seed = cfg.summary.seed;
        request.render = false;

        const auto agentIt = query.find("agent");
        if (agentIt == query.end())
            return errorResponse(400, "query parameter 'agent' is required");
        request.agent = agentIt->second;
        if (const auto it = query.find("method"); it != query.end())
            request.method = it->second;
        auto intParam = [&](const char* name, auto& field) -> bool {
            const auto it = query.find(name);
            if (it == query.end())
                return true;
            const auto parsed = parseNumber<std::remove_reference_t<decltype(field)>>(it->second);
            if (!parsed)
                return false;
            field = *parsed;
            return true;
        };
        if (!intParam("n", request.n) || !intParam("overlap", request.overlap) || !intParam("seed", request.seed))
            return errorResponse(400, "n, overlap and seed must be integers");

        const auto* entry = store_->agent(request.agent);
        if (!entry)
            return errorResponse(404, "unknown agent '" + request.agent + "'");
        try
        {
            validateSummarizeRequest(request);
        }
        catch (const ConfigError& e)
        {
            return errorResponse(400, e.what());
        }

        const auto method = ImportanceMethod::parse(request.method, request.seed);
        const std::string key = request.agent + "|" + method->name() + "|" + std::to_string(request.n) + "|" +
                                std::to_string(request.overlap) + "|" +
                                (method->scoreBased() ? std::string("-") : std::to_string(request.seed));
        {
            std::lock_guard lock(summary_mutex_);
            if (const auto it = summary_cache_.find(key); it != summary_cache_.end())
                return HttpResponse{200, it->second, "application/json"};
        }

        const Summary s = buildSummary(entry->model, entry->pairs, request, entry->provenance);
        json body = summaryToJson(s);
        for (std::size_t i = 0; i < s.entries.size(); ++i)
        {
            body["entries"][i]["payload"] = payloadLink(s.entries[i].pair);
        }
        std::string text = body.dump();

        std::lock_guard lock(summary_mutex_);
        summary_cache_.emplace(key, text);
        return HttpResponse{200, std::move(text), "application/json"};
    }

    json ApiService::openApiSpec()
    {
        auto param = [](const char* name, const char* in, const char* type, bool required) {
            return json{{"name", name}, {"in", in}, {"required", required}, {"schema", {{"type", type}}}};
        };
        auto responses = [](std::initializer_list<std::pair<const char*, const char*>> codes) {
            json r = json::object();
            for (const auto& [code, text] : codes)
                r[code] = {{"description", text}};
            return r;
        };
        json paths;
        paths["/api/agents"]["get"] = {{"summary", "Loaded agents with reward weights and training metadata"},
                                       {"responses", responses({{"200", "agent list"}})}};
        paths["/api/traces"]["get"] = {{"summary", "Trace ids of one agent"},
                                       {"parameters", json::array({param("agent", "query", "string", true)})},
                                       {"responses", responses({{"200", "trace list"}, {"404", "unknown agent"}})}};
        paths["/api/traces/{tid}"]["get"] = {
            {"summary", "Trace overview with per-step actions and eligibility"},
            {"parameters", json::array({param("tid", "path", "string", true)})},
            {"responses", responses({{"200", "trace"}, {"404", "unknown trace"}})}};
        paths["/api/traces/{tid}/steps/{i}"]["get"] = {
            {"summary", "Step detail: observation, action, decomposed Q, eligibility"},
            {"parameters", json::array({param("tid", "path", "string", true), param("i", "path", "integer", true),
                                        param("k", "query", "integer", false)})},
            {"responses", responses({{"200", "step"}, {"404", "unknown trace or step"}})}};
        paths["/api/traces/{tid}/steps/{i}/counterfactual"]["get"] = {
            {"summary", "Fresh counterfactual rollout rendered as a CORD payload"},
            {"parameters", json::array({param("tid", "path", "string", true), param("i", "path", "integer", true),
                                        param("action", "query", "string", false),
                                        param("k", "query", "integer", false)})},
            {"responses", responses({{"200", "payload"},
                                     {"400", "foil equals the fact action or bad parameter"},
                                     {"404", "unknown trace or step"},
                                     {"422", "origin has fewer than k following steps"}})}};
        paths["/api/summary"]["get"] = {
            {"summary", "Top-n counterfactual summary of one agent"},
            {"parameters", json::array({param("agent", "query", "string", true), param("method", "query", "string", false),
                                        param("n", "query", "integer", false), param("overlap", "query", "integer", false),
                                        param("seed", "query", "integer", false)})},
            {"responses", responses({{"200", "summary"}, {"400", "bad parameter"}, {"404", "unknown agent"}})}};
        paths["/api/spec"]["get"] = {{"summary", "This document"}, {"responses", responses({{"200", "OpenAPI"}})}};
        return json{{"openapi", "3.0.3"},
                    {"info", {{"title", "coviz"}, {"version", kToolVersion}}},
                    {"paths", std::move(paths)}};
    }

    int serve(const ApiService& service, const ServeOptions& options, const std::atomic<bool>& stop,
              const std::function<void(int port)>& onReady)
    {
        httplib::Server server;
        // SO_REUSEADDR only: the library default adds SO_REUSEPORT, which lets a
        // second server share a busy port instead of failing to bind.
        server.set_socket_options([](socket_t sock) {
            int yes = 1;
            setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, reinterpret_cast<const void*>(&yes), sizeof(yes));
        });
        server.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                                    {"Access-Control-Allow-Methods", "GET, OPTIONS"},
                                    {"Access-Control-Allow-Headers", "Content-Type"}});

        auto route = [&service](const httplib::Request& req, httplib::Response& res) {
            QueryParams query;
            for (const auto& [key, value] : req.params)
            {
                query.emplace(key, value);
            }
            const HttpResponse out = service.handle(req.method, req.path, query);
            res.status = out.status;
            res.set_content(out.body, out.content_type);
        };
        server.Get(R"(/api/.*)", route);
        server.Options(R"(/api/.*)", route);
        server.Post(R"(/api/.*)", route);
        if (options.static_dir && !server.set_mount_point("/", options.static_dir->string()))
        {
            std::fprintf(stderr, "static directory %s not found\n", options.static_dir->string().c_str());
            return kServePortInUse;
        }
        if (options.log_requests)
        {
            server.set_logger([](const httplib::Request& req, const httplib::Response& res) {
                std::fprintf(stderr, "%s %s -> %d\n", req.method.c_str(), req.path.c_str(), res.status);
            });
        }

        int port = options.port;
        if (port == 0)
        {
            port = server.bind_to_any_port(options.host);
            if (port < 0)
                return kServePortInUse;
        }
        else if (!server.bind_to_port(options.host, port))
        {
            return kServePortInUse;
        }

        std::jthread watcher([&](std::stop_token token) {
            while (!token.stop_requested() && !stop.load())
            {
                std::this_thread::sleep_for(std::chrono::milliseconds(50));
            }
            server.stop();
        });
        if (onReady)
            onReady(port);
        server.listen_after_bind();
        watcher.request_stop();
        std::fflush(stderr);
        return kServeOk;
    }
}
