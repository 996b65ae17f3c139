#pragma once

#include "coviz/pipeline.hpp"

#include <atomic>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace coviz
{
    /// Everything the service reads, loaded once from a run directory.
    class ArtifactStore
    {
    public:
        struct AgentEntry
        {
            AgentModel model;
            std::vector<std::string> trace_ids;  // sorted
            std::vector<CFPair> pairs;           // canonical order
            bool pairs_generated = false;        // not on disk, generated at load
            std::string provenance;

            bool operator==(const AgentEntry&) const = default;
        };

        ArtifactStore() = default;

        // Throws DataError when the directory is missing, malformed, or fails
        // manifest verification. A directory without agents loads as empty.
        static ArtifactStore load(const std::filesystem::path& root);

        const RunConfig& config() const noexcept { return config_; }
        const std::map<std::string, AgentEntry>& agents() const noexcept { return agents_; }
        const AgentEntry* agent(const std::string& id) const;
        const Trace* trace(const std::string& trace_id) const;

        bool operator==(const ArtifactStore&) const = default;

    private:
        RunConfig config_;
        std::map<std::string, AgentEntry> agents_;
        std::map<std::string, Trace> traces_;
    };

    struct HttpResponse
    {
        int status = 200;
        std::string body;
        std::string content_type = "application/json";
    };

    using QueryParams = std::map<std::string, std::string>;

    class ApiService
    {
    public:
        explicit ApiService(std::shared_ptr<const ArtifactStore> store);

        // Routes one request. Pure in (store, method, path, query).
        HttpResponse handle(std::string_view method, std::string_view path, const QueryParams& query = {}) const;

        const ArtifactStore& store() const noexcept { return *store_; }

        static json openApiSpec();

    private:
        HttpResponse agents() const;
        HttpResponse traces(const QueryParams& query) const;
        HttpResponse traceDetail(const std::string& trace_id) const;
        HttpResponse step(const std::string& trace_id, const std::string& index, const QueryParams& query) const;
        HttpResponse counterfactual(const std::string& trace_id, const std::string& index,
                                    const QueryParams& query) const;
        HttpResponse summary(const QueryParams& query) const;

        std::shared_ptr<const ArtifactStore> store_;
        mutable std::mutex summary_mutex_;
        mutable std::map<std::string, std::string> summary_cache_;
    };

    struct ServeOptions
    {
        std::string host = "127.0.0.1";
        int port = 8080;
        std::optional<std::filesystem::path> static_dir;
        bool log_requests = true;
    };

    inline constexpr int kServeOk = 0;
    inline constexpr int kServePortInUse = 4;

    // Blocks until `stop` becomes true. Returns kServePortInUse when the port
    // cannot be bound. `on_ready` runs once the socket is bound.
    int serve(const ApiService& service, const ServeOptions& options, const std::atomic<bool>& stop,
              const std::function<void(int port)>& on_ready = {});
}
