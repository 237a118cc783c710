// Command-line front end: every stage of the pipeline behind one binary.
// Exit codes: 0 success, 1 usage or contract failure, 2 missing input
// artifact, 3 config parse failure.

#include <cstdint>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "retgan/pipeline.hpp"

namespace {

retgan::PipelineConfig load_config(const std::string& path, bool seed_set, std::uint64_t seed) {
  retgan::PipelineConfig cfg;
  if (!path.empty()) cfg = retgan::PipelineConfig::parse_file(path);
  if (seed_set) cfg.seed = seed;
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"retrieval-guided text-conditional GAN pipeline"};
  app.require_subcommand(1);

  std::string config_path, corpus_dir, embed_dir, index_path, out_path, out_dir;
  std::string ckpt_path, resume_path, caption, ref_image, report_path;
  std::uint64_t seed = 0;
  std::size_t ref_index = 0, iters = 0, k = 0;

  auto add_config = [&](CLI::App* cmd, bool required) {
    auto* opt = cmd->add_option("--config", config_path, "pipeline config file");
    if (required) opt->required();
    cmd->add_option("--seed", seed, "override the config seed");
  };

  auto* gen_corpus = app.add_subcommand("gen-corpus", "generate the paired synthetic corpus");
  add_config(gen_corpus, false);
  gen_corpus->add_option("--out-dir", out_dir, "corpus output directory")->required();

  auto* pretrain = app.add_subcommand("pretrain-embed",
                                      "pretrain and freeze the two-tower encoders");
  add_config(pretrain, false);
  pretrain->add_option("--corpus-dir", corpus_dir, "corpus directory")->required();
  pretrain->add_option("--out-dir", out_dir, "encoder/embedding output dir (default "
                                             "<corpus-dir>/embed)");

  auto* build_index = app.add_subcommand("build-index",
                                         "build the caption -> top-K image retrieval map");
  add_config(build_index, false);
  build_index->add_option("--corpus-dir", corpus_dir, "corpus directory")->required();
  build_index->add_option("--embed-dir", embed_dir, "embedding cache dir (default "
                                                    "<corpus-dir>/embed)");
  build_index->add_option("--k", k, "retrieval depth (default from config)");
  build_index->add_option("--out", out_path, "output map path")->required();

  auto* train = app.add_subcommand("train", "adversarial training with retrieval guidance");
  add_config(train, true);
  train->add_option("--corpus-dir", corpus_dir, "corpus directory")->required();
  train->add_option("--embed-dir", embed_dir, "pretrained encoder dir (default "
                                              "<corpus-dir>/embed)");
  train->add_option("--index", index_path, "retrieval map path")->required();
  train->add_option("--out", out_path, "checkpoint output path")->required();
  train->add_option("--ckpt", resume_path, "resume from this checkpoint");

  auto* generate = app.add_subcommand("generate", "generate one image from a caption");
  generate->add_option("--ckpt", ckpt_path, "training checkpoint")->required();
  generate->add_option("--caption", caption, "caption text")->required();
  generate->add_option("--ref-index", ref_index, "training-pool reference index")->required();
  generate->add_option("--seed", seed, "noise seed");
  generate->add_option("--out", out_path, "output PPM path")->required();

  auto* optimize = app.add_subcommand("optimize-latent",
                                      "optimize w toward a reference image");
  add_config(optimize, false);
  optimize->add_option("--ckpt", ckpt_path, "training checkpoint")->required();
  optimize->add_option("--caption", caption, "caption text")->required();
  optimize->add_option("--ref", ref_image, "reference PPM image")->required();
  auto* iters_opt = optimize->add_option("--iters", iters, "iterations (default from config)");
  optimize->add_option("--out-dir", out_dir, "snapshot output directory")->required();

  auto* eval = app.add_subcommand("eval", "diversity, distribution and recall metrics");
  add_config(eval, true);
  eval->add_option("--ckpt", ckpt_path, "training checkpoint")->required();
  eval->add_option("--corpus-dir", corpus_dir, "corpus directory")->required();
  eval->add_option("--index", index_path, "retrieval map path (checked if given)");
  eval->add_option("--report", report_path, "metrics report path")->required();

  auto* ablate = app.add_subcommand("ablate", "train and evaluate the four guidance variants");
  add_config(ablate, true);
  ablate->add_option("--corpus-dir", corpus_dir, "corpus directory")->required();
  ablate->add_option("--out-dir", out_dir, "ablation output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    std::cerr << e.what() << "\n\n" << app.help() << "\n";
    return 1;
  }

  retgan::PipelineConfig cfg;
  try {
    const bool seed_set = app.get_subcommands().front()->count("--seed") > 0;
    cfg = load_config(config_path, seed_set, seed);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }

  try {
    if (*gen_corpus) {
      retgan::run_gen_corpus(cfg, out_dir);
      std::cout << "corpus written to " << out_dir << "\n";
    } else if (*pretrain) {
      if (embed_dir.empty()) embed_dir = retgan::default_embed_dir(corpus_dir);
      if (!out_dir.empty()) embed_dir = out_dir;
      const auto artifacts = retgan::run_pretrain(cfg, corpus_dir, embed_dir, std::cout);
      std::cout << "encoders written to " << artifacts.encoders_path << "\n";
    } else if (*build_index) {
      if (embed_dir.empty()) embed_dir = retgan::default_embed_dir(corpus_dir);
      if (build_index->count("--k") == 0) k = cfg.k;
      retgan::run_build_index(k, corpus_dir, embed_dir, out_path);
      std::cout << "retrieval map written to " << out_path << "\n";
    } else if (*train) {
      if (embed_dir.empty()) embed_dir = retgan::default_embed_dir(corpus_dir);
      retgan::run_train(cfg, corpus_dir, embed_dir, index_path, out_path, resume_path,
                        std::cout);
      std::cout << "checkpoint written to " << out_path << "\n";
    } else if (*generate) {
      if (generate->count("--seed") == 0) seed = 7;
      retgan::run_generate(ckpt_path, caption, ref_index, seed, out_path);
      std::cout << "image written to " << out_path << "\n";
    } else if (*optimize) {
      if (iters_opt->count() == 0) iters = cfg.latent_iters;
      retgan::run_optimize(cfg, ckpt_path, caption, ref_image, iters, out_dir, std::cout);
      std::cout << "snapshots written to " << out_dir << "\n";
    } else if (*eval) {
      if (!index_path.empty()) retgan::require_file(index_path, "retrieval map");
      const auto summary = retgan::run_eval(cfg, ckpt_path, corpus_dir, report_path);
      std::cout << summary.report();
    } else if (*ablate) {
      retgan::run_ablate(cfg, corpus_dir, out_dir, std::cout);
      std::cout << "ablation table written to " << out_dir << "/ablation.txt\n";
    }
  } catch (const retgan::MissingArtifact& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
