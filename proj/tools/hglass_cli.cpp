// Copyright 2026 The hglass Authors
// SPDX-License-Identifier: Apache-2.0

#include <cstdio>
#include <exception>
#include <iostream>

#include "CLI11.hpp"
#include "json.hpp"

#include "hglass/commands.hpp"
#include "hglass/error.hpp"

namespace {

template <typename T>
void opt(CLI::App* app, const std::string& name, std::optional<T>& target, const std::string& help) {
  app->add_option_function<T>(name, [&target](const T& v) { target = v; }, help);
}

void add_overrides(CLI::App* app, hglass::Overrides& o) {
  opt(app, "--seed", o.seed, "Random seed");
  opt(app, "--mode", o.mode, "Augmentation: none, flip, hourglass or multicast");
  opt(app, "--psi", o.psi_deg, "Masking threshold in degrees");
  opt(app, "--kappa", o.kappa, "Rays per original in multicast mode");
  opt(app, "--iters", o.iters, "Training iterations");
  opt(app, "--threads", o.threads, "Worker threads (results do not depend on it)");
}

void print_eval(const hglass::EvalReport& r) {
  std::printf("masked    psnr %.3f  ssim %.4f  %s %.4f\n", r.mean_masked.psnr, r.mean_masked.ssim,
              r.mean_masked.average_label().c_str(), r.mean_masked.average_err);
  std::printf("unmasked  psnr %.3f  ssim %.4f  %s %.4f\n", r.mean_unmasked.psnr, r.mean_unmasked.ssim,
              r.mean_unmasked.average_label().c_str(), r.mean_unmasked.average_err);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"hglass: few-view radiance fields with hourglass ray augmentation"};
  app.require_subcommand(1);

  hglass::GenOracleArgs gen;
  std::string gen_out;
  auto* g = app.add_subcommand("gen-oracle", "Render an analytic Lambertian scene as a dataset");
  opt(g, "--scene", gen.scene, "Scene JSON (default: one sphere)");
  opt(g, "--config", gen.config, "Dataset options JSON");
  g->add_option("--out", gen_out, "Output directory")->required();
  opt(g, "--n-train", gen.n_train, "Training views");
  opt(g, "--n-test", gen.n_test, "Held-out views");
  opt(g, "--resolution", gen.resolution, "Image width and height");
  opt(g, "--seed", gen.seed, "Pose seed");

  hglass::TrainArgs tr;
  std::string tr_data, tr_out;
  auto* t = app.add_subcommand("train", "Train a field on a dataset directory");
  opt(t, "--config", tr.config, "Training config JSON");
  add_overrides(t, tr.overrides);
  t->add_option("--data", tr_data, "Dataset directory")->required();
  t->add_option("--out", tr_out, "Output directory")->required();
  opt(t, "--resume", tr.resume, "Checkpoint to resume from");
  t->add_option("--max-views", tr.max_views, "Use only the first N training views");
  t->add_flag("--verbose", tr.verbose, "Print progress to stderr");

  hglass::RenderArgs rd;
  std::string rd_ckpt, rd_out;
  auto* r = app.add_subcommand("render", "Render a checkpoint from a camera");
  r->add_option("--checkpoint", rd_ckpt, "Checkpoint file")->required();
  opt(r, "--config", rd.config, "Training config JSON (default: beside the checkpoint)");
  opt(r, "--camera", rd.camera, "Camera JSON");
  opt(r, "--data", rd.data, "Dataset directory to take a camera from");
  r->add_option("--split", rd.split, "Dataset split");
  r->add_option("--view", rd.view, "View index in the split");
  opt(r, "--width", rd.width, "Override the output width");
  opt(r, "--threads", rd.threads, "Worker threads");
  r->add_option("--out", rd_out, "Output PNG")->required();

  hglass::EvalArgs ev;
  std::string ev_ckpt, ev_data, ev_out;
  auto* e = app.add_subcommand("eval", "Masked and unmasked metrics on a held-out split");
  e->add_option("--checkpoint", ev_ckpt, "Checkpoint file")->required();
  opt(e, "--config", ev.config, "Training config JSON (default: beside the checkpoint)");
  e->add_option("--data", ev_data, "Dataset directory")->required();
  e->add_option("--split", ev.split, "Dataset split");
  opt(e, "--threads", ev.threads, "Worker threads");
  e->add_option("--out", ev_out, "Output JSON")->required();

  hglass::AblateArgs ab;
  std::string ab_sweep, ab_data, ab_out;
  auto* a = app.add_subcommand("ablate", "Train and evaluate every variant of a sweep");
  opt(a, "--config", ab.config, "Base training config JSON");
  add_overrides(a, ab.overrides);
  a->add_option("--sweep", ab_sweep, "Sweep JSON")->required();
  a->add_option("--data", ab_data, "Dataset directory")->required();
  a->add_option("--out", ab_out, "Output directory")->required();
  a->add_option("--max-views", ab.max_views, "Use only the first N training views");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? hglass::kExitOk : hglass::kExitUsage;
  }

  try {
    if (*g) {
      gen.out = gen_out;
      hglass::cmd_gen_oracle(gen);
    } else if (*t) {
      tr.data = tr_data;
      tr.out = tr_out;
      if (auto rep = hglass::cmd_train(tr)) print_eval(*rep);
    } else if (*r) {
      rd.checkpoint = rd_ckpt;
      rd.out = rd_out;
      hglass::cmd_render(rd);
    } else if (*e) {
      ev.checkpoint = ev_ckpt;
      ev.data = ev_data;
      ev.out = ev_out;
      print_eval(hglass::cmd_eval(ev));
    } else if (*a) {
      ab.sweep = ab_sweep;
      ab.data = ab_data;
      ab.out = ab_out;
      std::cout << hglass::ablation_markdown(hglass::cmd_ablate(ab));
    }
  } catch (const hglass::NumericalError& err) {
    std::fprintf(stderr, "numerical error: %s\n", err.what());
    return hglass::kExitNumerical;
  } catch (const hglass::DataError& err) {
    std::fprintf(stderr, "data error: %s\n", err.what());
    return hglass::kExitData;
  } catch (const hglass::ConfigError& err) {
    std::fprintf(stderr, "usage error: %s\n", err.what());
    return hglass::kExitUsage;
  } catch (const std::exception& err) {
    std::fprintf(stderr, "error: %s\n", err.what());
    return hglass::kExitData;
  }
  return hglass::kExitOk;
}
