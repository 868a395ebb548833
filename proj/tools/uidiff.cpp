// uidiff: command-line front end for ingest, training, generation, postprocessing, evaluation and serving.

#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <thread>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "uidiff/error.hpp"
#include "uidiff/eval.hpp"
#include "uidiff/layout_diffusion.hpp"
#include "uidiff/postprocess.hpp"
#include "uidiff/rico.hpp"
#include "uidiff/service/server.hpp"
#include "uidiff/synthetic.hpp"
#include "uidiff/ui/pipeline.hpp"
#include "uidiff/wireframe.hpp"

namespace fs = std::filesystem;
using namespace uidiff;
using nlohmann::json;

namespace {

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw Error(ErrorCode::IOFailure, "cannot write " + path.string());
    f << text;
}

std::vector<Layout> manifest_layouts(const fs::path& manifest) {
    std::vector<Layout> out;
    for (const auto& e : read_manifest(manifest))
        if (e.layout) out.push_back(*e.layout);
    if (out.empty()) throw Error(ErrorCode::InvalidArgument, "manifest has no inline layouts: " + manifest.string());
    return out;
}

service::Service* g_service = nullptr;

void on_signal(int) {
    if (g_service) g_service->stop();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"uidiff: layout-then-image UI generation"};
    app.require_subcommand(1);
    bool verbose = false;
    app.add_flag("-v,--verbose", verbose, "Debug logging");

    // synthetic
    auto* syn = app.add_subcommand("synthetic", "Write a procedural Rico-style dataset");
    fs::path syn_out;
    SyntheticDatasetConfig syn_cfg;
    syn->add_option("--out", syn_out, "Output directory")->required();
    syn->add_option("--portrait", syn_cfg.portrait, "Portrait screens");
    syn->add_option("--landscape", syn_cfg.landscape, "Landscape screens (rejected by ingest)");
    syn->add_option("--seed", syn_cfg.seed, "Seed");

    // ingest
    auto* ing = app.add_subcommand("ingest", "Preprocess a Rico directory into a training manifest");
    fs::path ing_rico;
    BuildConfig ing_cfg;
    bool keep_wireframes = false;
    ing->add_option("--rico", ing_rico, "Directory with combined/, semantic/, hierarchies/")->required();
    ing->add_option("--out", ing_cfg.out_dir, "Output directory")->required();
    ing->add_option("--e-max", ing_cfg.e_max, "Maximum elements per layout");
    ing->add_option("--caption-seed", ing_cfg.caption_seed, "Caption template seed");
    ing->add_flag("--keep-wireframes", keep_wireframes, "Use the shipped semantic images instead of re-rendering");

    // train-layout
    auto* tl = app.add_subcommand("train-layout", "Train the layout denoiser");
    fs::path tl_data, tl_out = "layout.ckpt";
    LayoutTrainConfig tl_cfg;
    DenoiserConfig tl_model;
    tl->add_option("--data", tl_data, "manifest.jsonl")->required();
    tl->add_option("--steps", tl_cfg.steps, "Optimizer steps");
    tl->add_option("--seed", tl_cfg.seed, "Seed");
    tl->add_option("--batch", tl_cfg.batch_size, "Batch size");
    tl->add_option("--lr", tl_cfg.lr, "Learning rate");
    tl->add_option("--layers", tl_model.layers, "Transformer layers");
    tl->add_option("--width", tl_model.width, "Model width");
    tl->add_option("--out", tl_out, "Checkpoint path");

    // gen-layout
    auto* gl = app.add_subcommand("gen-layout", "Sample a layout conditioned on components");
    fs::path gl_ckpt = "layout.ckpt", gl_out = "layout.json", gl_wire;
    std::string gl_components;
    std::uint64_t gl_seed = 0;
    int gl_steps = 0;
    gl->add_option("--ckpt", gl_ckpt, "Layout checkpoint");
    gl->add_option("--components", gl_components, "e.g. \"text button:2,toolbar:1\"");
    gl->add_option("--seed", gl_seed, "Seed");
    gl->add_option("--steps", gl_steps, "Reverse steps (default T)");
    gl->add_option("--out", gl_out, "Layout JSON");
    gl->add_option("--wireframe", gl_wire, "Also write the wireframe PNG");

    // train-ui
    auto* tu = app.add_subcommand("train-ui", "Fine-tune the control branch (pretraining the toy base first if needed)");
    fs::path tu_data, tu_out = "ui.ckpt", tu_base, tu_log, tu_save_base;
    std::string tu_profile = ui::kProfileToy;
    ui::FinetuneConfig tu_cfg;
    ui::ToyPretrainConfig tu_pre;
    tu->add_option("--data", tu_data, "manifest.jsonl")->required();
    tu->add_option("--profile", tu_profile, "toy | pretrained-adapter")->check(CLI::IsMember({ui::kProfileToy, ui::kProfileAdapter}));
    tu->add_option("--base", tu_base, "Frozen base checkpoint (required for pretrained-adapter)");
    tu->add_option("--save-base", tu_save_base, "Write the pretrained toy base here");
    tu->add_option("--epochs", tu_cfg.epochs, "Epochs");
    tu->add_option("--batch", tu_cfg.batch_size, "Batch size");
    tu->add_option("--lr", tu_cfg.learning_rate, "Learning rate");
    tu->add_option("--prompt-dropout", tu_cfg.prompt_dropout, "Default-prompt replacement probability");
    tu->add_option("--max-steps", tu_cfg.max_steps, "Override the step count");
    tu->add_option("--seed", tu_cfg.seed, "Seed");
    tu->add_option("--codec-steps", tu_pre.codec.steps, "Toy codec pretraining steps");
    tu->add_option("--denoiser-steps", tu_pre.denoiser_steps, "Toy denoiser pretraining steps");
    tu->add_option("--text-steps", tu_pre.text.steps, "Toy text encoder pretraining steps");
    tu->add_option("--log", tu_log, "Loss log (JSONL)");
    tu->add_option("--out", tu_out, "Checkpoint path");

    // gen-ui
    auto* gu = app.add_subcommand("gen-ui", "Generate a UI image for a layout and prompt");
    fs::path gu_ckpt = "ui.ckpt", gu_layout, gu_out = "ui.png";
    std::string gu_prompt = kDefaultPrompt;
    std::uint64_t gu_seed = 0;
    int gu_steps = 50;
    gu->add_option("--ckpt", gu_ckpt, "UI checkpoint");
    gu->add_option("--prompt", gu_prompt, "Description");
    gu->add_option("--layout", gu_layout, "Layout JSON")->required();
    gu->add_option("--seed", gu_seed, "Seed");
    gu->add_option("--steps", gu_steps, "Sampler steps");
    gu->add_option("--out", gu_out, "Output PNG");

    // crop
    auto* cr = app.add_subcommand("crop", "Crop components out of a generated UI");
    fs::path cr_ui, cr_layout, cr_out;
    cr->add_option("--ui", cr_ui, "UI image")->required();
    cr->add_option("--layout", cr_layout, "Layout JSON")->required();
    cr->add_option("--out", cr_out, "Output directory")->required();

    // codegen
    auto* cg = app.add_subcommand("codegen", "Emit GUI code for a layout");
    fs::path cg_layout, cg_ui, cg_out;
    std::string cg_format = "xml";
    cg->add_option("--layout", cg_layout, "Layout JSON")->required();
    cg->add_option("--ui", cg_ui, "UI image for background colors");
    cg->add_option("--format", cg_format, "xml | html")->check(CLI::IsMember({"xml", "html"}));
    cg->add_option("--out", cg_out, "Output file")->required();

    // eval
    auto* ev = app.add_subcommand("eval", "Score generated results against their requests");
    fs::path ev_req, ev_res, ev_out = "report.json";
    std::string ev_backend = "mock";
    ev->add_option("--requests", ev_req, "requests.jsonl")->required();
    ev->add_option("--results", ev_res, "results.jsonl")->required();
    ev->add_option("--out", ev_out, "Report JSON");
    ev->add_option("--backend", ev_backend, "Embedding backend");

    // serve
    auto* sv = app.add_subcommand("serve", "Run the REST service");
    service::ServiceConfig sv_cfg;
    std::string sv_host = "127.0.0.1";
    int sv_port = 8080;
    fs::path sv_layout, sv_ui;
    sv->add_option("--port", sv_port, "Port");
    sv->add_option("--host", sv_host, "Bind address");
    sv->add_option("--store", sv_cfg.store_root, "Store root (UIDIFF_STORE overrides)");
    sv->add_option("--layout-ckpt", sv_layout, "Layout checkpoint");
    sv->add_option("--ui-ckpt", sv_ui, "UI checkpoint");
    sv->add_option("--queue", sv_cfg.queue_capacity, "Pending job limit");

    // palette
    auto* pal = app.add_subcommand("palette", "Print the wireframe palette as JSON");

    CLI11_PARSE(app, argc, argv);
    spdlog::set_level(verbose ? spdlog::level::debug : spdlog::level::info);

    try {
        if (*syn) {
            const auto ids = write_synthetic_rico(syn_out, syn_cfg);
            fmt::print("wrote {} screens to {}\n", ids.size(), syn_out.string());
        } else if (*ing) {
            ing_cfg.rerender_wireframes = !keep_wireframes;
            const auto stats = build_training_set(scan_rico_dir(ing_rico), ing_cfg);
            fmt::print("{}\n", stats.to_json().dump(2));
        } else if (*tl) {
            const auto layouts = manifest_layouts(tl_data);
            LayoutDenoiser model(tl_model, tl_cfg.seed);
            model.fit_count_prior(layouts);
            const auto trace = train_layout_model(model, layouts, tl_cfg, [&](int step, double loss) {
                if (step % 50 == 0 || step + 1 == tl_cfg.steps) spdlog::info("step {:>5} loss {:.4f}", step, loss);
            });
            save_layout_model(model, tl_out);
            fmt::print("saved {} after {} steps (final loss {:.4f})\n", tl_out.string(), trace.size(), trace.empty() ? 0.0 : trace.back());
        } else if (*gl) {
            const auto model = load_layout_model(gl_ckpt);
            LayoutSampleConfig sc;
            sc.steps = gl_steps > 0 ? gl_steps : model->config().schedule.T;
            const auto s = sample_layout(*model, ComponentCondition::parse(gl_components), gl_seed, sc);
            save_layout(s.layout, gl_out.string());
            if (!gl_wire.empty()) write_png(render_wireframe(s.layout), gl_wire);
            fmt::print("{}\n", layout_to_string(s.layout));
        } else if (*tu) {
            const auto items = ui::load_ui_items(read_manifest(tu_data));
            std::unique_ptr<ui::UiModel> model;
            if (!tu_base.empty()) {
                model = ui::UiModel::load_base(tu_base, tu_profile);
            } else {
                if (tu_profile != ui::kProfileToy) throw Error(ErrorCode::InvalidArgument, "the pretrained-adapter profile needs --base");
                std::vector<std::string> captions;
                for (const auto& it : items) captions.push_back(it.caption);
                model = std::make_unique<ui::UiModel>(ui::kProfileToy, ui::WordTokenizer::build(captions), ui::UiModelConfig(), tu_cfg.seed);
                tu_pre.seed = tu_cfg.seed;
                const auto rep = ui::pretrain_toy_base(*model, items, tu_pre);
                spdlog::info("toy base: codec loss {:.5f}, denoiser loss {:.4f}, latent scale {:.4f}",
                             rep.codec_loss.empty() ? 0.0 : rep.codec_loss.back(), rep.denoiser_loss.empty() ? 0.0 : rep.denoiser_loss.back(),
                             rep.latent_scale);
                if (!tu_save_base.empty()) model->save_base(tu_save_base);
            }
            std::ofstream log;
            if (!tu_log.empty()) log.open(tu_log);
            const auto res = ui::finetune_control(*model, items, tu_cfg, [&](long step, double loss) {
                if (log) log << json{{"step", step}, {"loss", loss}}.dump() << "\n";
                if (step % 50 == 0) spdlog::info("step {:>5} mse {:.5f}", step, loss);
            });
            model->save(tu_out, {{"finetune", tu_cfg.to_json()}});
            fmt::print("saved {} after {} steps; frozen hashes unchanged\n", tu_out.string(), res.steps);
        } else if (*gu) {
            const auto model = ui::UiModel::load(gu_ckpt);
            write_png(ui::generate_ui(*model, gu_prompt, load_layout(gu_layout.string()), gu_seed, gu_steps), gu_out);
            fmt::print("wrote {}\n", gu_out.string());
        } else if (*cr) {
            const auto comps = crop_components(read_image(cr_ui), load_layout(cr_layout.string()));
            fs::create_directories(cr_out);
            json index = json::array();
            for (size_t i = 0; i < comps.size(); ++i) {
                const auto& c = comps[i];
                std::string cat(c.category.name());
                std::replace(cat.begin(), cat.end(), ' ', '_');
                const std::string file = fmt::format("{:02d}_{}.png", i, cat);
                write_png(c.image, cr_out / file);
                index.push_back({{"file", file},
                                 {"category", std::string(c.category.name())},
                                 {"rect", {c.rect.x0, c.rect.y0, c.rect.width(), c.rect.height()}},
                                 {"fill_color", c.fill_color ? json(to_hex(*c.fill_color)) : json(nullptr)},
                                 {"occluded_fraction", c.occluded_fraction}});
            }
            write_text(cr_out / "crops.json", index.dump(2) + "\n");
            fmt::print("wrote {} crops to {}\n", comps.size(), cr_out.string());
        } else if (*cg) {
            std::optional<Image> img;
            if (!cg_ui.empty()) img = read_image(cg_ui);
            const auto gen = generate_code(load_layout(cg_layout.string()), img ? &*img : nullptr);
            write_text(cg_out, cg_format == "xml" ? gen.xml : gen.html);
        } else if (*ev) {
            const CompatibilityScorer scorer{make_backend(ev_backend)};
            const auto rep = evaluate_batch(read_eval_requests(ev_req), read_eval_results(ev_res), scorer);
            write_text(ev_out, rep.to_json().dump(2) + "\n");
            fmt::print("{}", rep.to_table());
        } else if (*sv) {
            sv_cfg.store_root = service::resolve_store_root(sv_cfg.store_root);
            if (!sv_layout.empty()) sv_cfg.layout_ckpt = sv_layout;
            if (!sv_ui.empty()) sv_cfg.ui_ckpt = sv_ui;
            service::Service svc(sv_cfg);
            const int port = svc.bind(sv_host, sv_port);
            g_service = &svc;
            std::signal(SIGINT, on_signal);
            std::signal(SIGTERM, on_signal);
            spdlog::info("serving on http://{}:{} (store {})", sv_host, port, sv_cfg.store_root.string());
            svc.run();
            g_service = nullptr;
        } else if (*pal) {
            fmt::print("{}\n", palette_to_json(Palette::standard()).dump(2));
        }
    } catch (const Error& e) {
        spdlog::error("{}", e.what());
        return 2;
    } catch (const std::exception& e) {
        spdlog::error("{}", e.what());
        return 1;
    }
    return 0;
}
