#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace uidiff::service {

/// Project metadata. `artifacts` lists every artifact hash the project references.
struct Project {
    std::string id;
    std::string name;
    std::string created_at;  // ISO-8601 UTC
    nlohmann::json layouts = nlohmann::json::array();
    nlohmann::json uis = nlohmann::json::array();
    nlohmann::json crops = nlohmann::json::array();
    nlohmann::json code = nlohmann::json::array();
    std::vector<std::string> artifacts;

    nlohmann::json to_json() const;
    static Project from_json(const nlohmann::json& j);
};

/// Layout on disk:
///   <root>/artifacts/<sha256>   content-addressed blobs
///   <root>/projects/<id>.json   metadata, replaced atomically via rename
/// Artifacts are written before the metadata that references them.
class Store {
public:
    /// max_bytes = 0 means unbounded.
    explicit Store(std::filesystem::path root, std::uint64_t max_bytes = 0);

    const std::filesystem::path& root() const { return root_; }

    /// Returns the SHA-256 hex digest. The artifact is pinned against GC until
    /// a project update references it. Throws StorageFull, IOFailure.
    std::string put_artifact(const std::string& bytes);
    std::optional<std::string> get_artifact(const std::string& hash) const;
    bool has_artifact(const std::string& hash) const;

    Project create_project(const std::string& name);
    /// Throws NotFound.
    Project get_project(const std::string& id) const;
    std::vector<Project> list_projects() const;
    /// Applies `fn` under the project's lock and persists the result. Throws NotFound.
    Project update_project(const std::string& id, const std::function<void(Project&)>& fn);
    /// Removes the metadata, then artifacts no other project references. Throws NotFound.
    void delete_project(const std::string& id);

    /// Deletes every artifact with no referencing project; returns how many.
    int collect_garbage();

private:
    std::filesystem::path project_path(const std::string& id) const;
    void write_project(const Project& p) const;
    std::mutex& lock_for(const std::string& id);
    std::uint64_t bytes_used() const;

    std::filesystem::path root_;
    std::uint64_t max_bytes_;
    mutable std::mutex mu_;  // guards locks_, GC and artifact writes
    std::map<std::string, std::unique_ptr<std::mutex>> locks_;
    std::set<std::string> pinned_;  // written but not yet referenced; GC skips them
};

/// Writes `data` to a sibling temporary file and renames it over `path`.
void atomic_write(const std::filesystem::path& path, const std::string& data);

}  // namespace uidiff::service
