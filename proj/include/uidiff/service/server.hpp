#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>

#include "uidiff/layout_diffusion.hpp"
#include "uidiff/service/store.hpp"
#include "uidiff/ui/pipeline.hpp"

namespace uidiff::service {

struct ServiceConfig {
    std::filesystem::path store_root = "store";
    std::uint64_t max_store_bytes = 0;
    std::optional<std::filesystem::path> layout_ckpt, ui_ckpt;
    /// Pending generation jobs beyond this are refused with 429.
    int queue_capacity = 16;
    int layout_steps = 100;
    int ui_steps = 50;
    /// How long a synchronous request waits for its job.
    std::chrono::seconds sync_timeout{600};
};

/// UIDIFF_STORE when set, otherwise `fallback`.
std::filesystem::path resolve_store_root(const std::filesystem::path& fallback);

/// REST front end over the store and the two models. Generation runs on one
/// worker thread behind a bounded queue; other handlers run on the HTTP pool.
class Service {
public:
    explicit Service(ServiceConfig cfg);
    ~Service();
    Service(const Service&) = delete;
    Service& operator=(const Service&) = delete;

    void set_layout_model(std::shared_ptr<const LayoutDenoiser> model, std::string checkpoint_id);
    void set_ui_model(std::shared_ptr<const ui::UiModel> model);

    /// Binds to host:port (port 0 picks a free one) and returns the bound port.
    int bind(const std::string& host, int port);
    /// Serves until stop(); call after bind().
    void run();
    void stop();
    /// Blocks until the queue is empty and the worker is idle.
    void drain();

    Store& store();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace uidiff::service
