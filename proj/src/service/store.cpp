#include "uidiff/service/store.hpp"

#include <atomic>
#include <chrono>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>

#include <fmt/chrono.h>
#include <fmt/format.h>

#include "uidiff/error.hpp"
#include "uidiff/hash.hpp"
#include "uidiff/rng.hpp"

namespace uidiff::service {

using nlohmann::json;
namespace fs = std::filesystem;

json Project::to_json() const {
    return {{"id", id}, {"name", name}, {"created_at", created_at}, {"layouts", layouts},
            {"uis", uis}, {"crops", crops}, {"code", code}, {"artifacts", artifacts}};
}

Project Project::from_json(const json& j) {
    Project p;
    p.id = j.at("id").get<std::string>();
    p.name = j.at("name").get<std::string>();
    p.created_at = j.at("created_at").get<std::string>();
    p.layouts = j.value("layouts", json::array());
    p.uis = j.value("uis", json::array());
    p.crops = j.value("crops", json::array());
    p.code = j.value("code", json::array());
    p.artifacts = j.value("artifacts", std::vector<std::string>{});
    return p;
}

void atomic_write(const fs::path& path, const std::string& data) {
    static std::atomic<std::uint64_t> counter{0};
    const fs::path tmp = path.string() + fmt::format(".tmp{}-{}", std::hash<std::thread::id>{}(std::this_thread::get_id()), counter++);
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) throw Error(ErrorCode::IOFailure, "cannot write " + tmp.string());
        f.write(data.data(), static_cast<std::streamsize>(data.size()));
        f.flush();
        if (!f) {
            f.close();
            fs::remove(tmp);
            throw Error(ErrorCode::IOFailure, "short write to " + tmp.string());
        }
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) {
        fs::remove(tmp);
        throw Error(ErrorCode::IOFailure, fmt::format("rename to {} failed: {}", path.string(), ec.message()));
    }
}

Store::Store(fs::path root, std::uint64_t max_bytes) : root_(std::move(root)), max_bytes_(max_bytes) {
    fs::create_directories(root_ / "artifacts");
    fs::create_directories(root_ / "projects");
}

namespace {

bool valid_hash(const std::string& h) {
    return h.size() == 64 && h.find_first_not_of("0123456789abcdef") == std::string::npos;
}

bool valid_id(const std::string& id) {
    return !id.empty() && id.size() <= 64 && id.find_first_not_of("0123456789abcdefghijklmnopqrstuvwxyz-") == std::string::npos;
}

std::string read_file(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    if (!f) throw Error(ErrorCode::IOFailure, "cannot read " + p.string());
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

std::string now_iso() {
    const auto now = std::chrono::system_clock::now();
    return fmt::format("{:%Y-%m-%dT%H:%M:%S}Z", fmt::gmtime(std::chrono::system_clock::to_time_t(now)));
}

}  // namespace

std::uint64_t Store::bytes_used() const {
    std::uint64_t total = 0;
    for (const auto& e : fs::directory_iterator(root_ / "artifacts"))
        if (e.is_regular_file()) total += e.file_size();
    return total;
}

std::string Store::put_artifact(const std::string& bytes) {
    const std::string hash = sha256_hex(bytes);
    const fs::path path = root_ / "artifacts" / hash;
    std::lock_guard lk(mu_);
    pinned_.insert(hash);
    if (fs::exists(path)) return hash;
    if (max_bytes_ > 0 && bytes_used() + bytes.size() > max_bytes_) {
        pinned_.erase(hash);
        throw Error(ErrorCode::StorageFull, fmt::format("artifact of {} bytes exceeds the {} byte store limit", bytes.size(), max_bytes_));
    }
    atomic_write(path, bytes);
    return hash;
}

std::optional<std::string> Store::get_artifact(const std::string& hash) const {
    if (!valid_hash(hash)) return std::nullopt;
    const fs::path path = root_ / "artifacts" / hash;
    if (!fs::exists(path)) return std::nullopt;
    return read_file(path);
}

bool Store::has_artifact(const std::string& hash) const { return valid_hash(hash) && fs::exists(root_ / "artifacts" / hash); }

fs::path Store::project_path(const std::string& id) const { return root_ / "projects" / (id + ".json"); }

void Store::write_project(const Project& p) const { atomic_write(project_path(p.id), p.to_json().dump(2)); }

std::mutex& Store::lock_for(const std::string& id) {
    std::lock_guard lk(mu_);
    auto& m = locks_[id];
    if (!m) m = std::make_unique<std::mutex>();
    return *m;
}

Project Store::create_project(const std::string& name) {
    static std::atomic<std::uint64_t> counter{0};
    const auto t = static_cast<std::uint64_t>(std::chrono::steady_clock::now().time_since_epoch().count());
    for (int attempt = 0; attempt < 64; ++attempt) {
        Project p;
        p.id = fmt::format("p-{:012x}", mix_seed(t, counter++) & 0xffffffffffffULL);
        p.name = name;
        p.created_at = now_iso();
        // Claiming the id with an exclusive create keeps concurrent creators apart.
        const fs::path claim = root_ / "projects" / (p.id + ".lock");
        std::FILE* f = std::fopen(claim.c_str(), "wx");
        if (!f) continue;
        std::fclose(f);
        if (fs::exists(project_path(p.id))) continue;
        write_project(p);
        return p;
    }
    throw Error(ErrorCode::IOFailure, "could not allocate a project id");
}

Project Store::get_project(const std::string& id) const {
    if (!valid_id(id)) throw Error(ErrorCode::NotFound, "project " + id);
    const fs::path p = project_path(id);
    if (!fs::exists(p)) throw Error(ErrorCode::NotFound, "project " + id);
    return Project::from_json(json::parse(read_file(p)));
}

std::vector<Project> Store::list_projects() const {
    std::vector<Project> out;
    for (const auto& e : fs::directory_iterator(root_ / "projects")) {
        if (e.path().extension() != ".json") continue;
        try {
            out.push_back(Project::from_json(json::parse(read_file(e.path()))));
        } catch (const std::exception&) {
            // Deleted between listing and reading.
        }
    }
    std::sort(out.begin(), out.end(), [](const Project& a, const Project& b) { return a.created_at != b.created_at ? a.created_at < b.created_at : a.id < b.id; });
    return out;
}

Project Store::update_project(const std::string& id, const std::function<void(Project&)>& fn) {
    std::lock_guard lk(lock_for(id));
    Project p = get_project(id);
    fn(p);
    p.id = id;
    std::sort(p.artifacts.begin(), p.artifacts.end());
    p.artifacts.erase(std::unique(p.artifacts.begin(), p.artifacts.end()), p.artifacts.end());
    for (const auto& h : p.artifacts)
        if (!has_artifact(h)) throw Error(ErrorCode::IOFailure, "metadata would reference missing artifact " + h);
    write_project(p);
    {
        std::lock_guard g(mu_);
        for (const auto& h : p.artifacts) pinned_.erase(h);
    }
    return p;
}

void Store::delete_project(const std::string& id) {
    {
        std::lock_guard lk(lock_for(id));
        get_project(id);
        fs::remove(project_path(id));
        fs::remove(root_ / "projects" / (id + ".lock"));
    }
    collect_garbage();
}

int Store::collect_garbage() {
    std::lock_guard lk(mu_);
    std::set<std::string> live;
    for (const auto& p : list_projects()) live.insert(p.artifacts.begin(), p.artifacts.end());
    int removed = 0;
    for (const auto& e : fs::directory_iterator(root_ / "artifacts")) {
        const std::string name = e.path().filename().string();
        if (!valid_hash(name) || live.count(name) || pinned_.count(name)) continue;
        fs::remove(e.path());
        ++removed;
    }
    return removed;
}

}  // namespace uidiff::service
