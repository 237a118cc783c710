#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <sys/wait.h>

#include "retgan/checkpoint.hpp"
#include "retgan/corpus.hpp"
#include "retgan/embedder.hpp"
#include "retgan/gantrain.hpp"
#include "retgan/pipeline.hpp"
#include "retgan/ppm.hpp"
#include "retgan/retrieval.hpp"
#include "test_support.hpp"

using namespace retgan;
using test::TempDir;

namespace {

/// Micro-scale settings so the full pipeline runs in seconds.
PipelineConfig micro_config() {
  PipelineConfig cfg;
  cfg.seed = 21;
  cfg.n_train = 24;
  cfg.n_test = 8;
  cfg.k = 3;
  cfg.batch = 4;
  cfg.steps = 3;
  cfg.pretrain_batch = 16;
  cfg.pretrain_steps = 40;
  cfg.embed_img_hidden = 32;
  cfg.embed_txt_hidden = 32;
  cfg.eval_captions = 3;
  cfg.eval_samples = 2;
  cfg.latent_iters = 4;
  return cfg;
}

std::string slurp(const std::string& path) {
  std::ifstream f(path);
  REQUIRE(f.good());
  std::ostringstream o;
  o << f.rdbuf();
  return o.str();
}

bool exists(const std::string& path) { return std::ifstream(path).good(); }

int run_cli(const std::string& args, const std::string& capture = "/dev/null") {
  const std::string cmd = std::string(RETGAN_CLI_PATH) + " " + args + " >" + capture + " 2>&1";
  const int status = std::system(cmd.c_str());
  REQUIRE(status != -1);
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("pipeline config round trips with comments and rejects typos") {
  const PipelineConfig defaults;
  CHECK(defaults.seed == 7);
  CHECK(defaults.n_train == 1000);
  CHECK(defaults.n_test == 200);
  CHECK(defaults.k == 5);
  CHECK(defaults.steps == 2000);
  CHECK(defaults.batch == 16);
  CHECK(defaults.eval_captions == 50);
  CHECK(defaults.eval_samples == 8);
  CHECK(defaults.latent_iters == 300);

  PipelineConfig cfg = micro_config();
  cfg.guidance = Guidance::kContrastive;
  cfg.gan_loss = GanLoss::kMinimax;
  cfg.encoder_mode = EncoderMode::kDirect;
  cfg.lambda = 0.75;
  const PipelineConfig back = PipelineConfig::parse(cfg.serialize());
  CHECK(back.serialize() == cfg.serialize());

  const PipelineConfig commented = PipelineConfig::parse(
      "# smoke settings\n"
      "\n"
      "seed = 3\n"
      "steps = 12  \n"
      "guidance = none\n");
  CHECK(commented.seed == 3);
  CHECK(commented.steps == 12);
  CHECK(commented.guidance == Guidance::kNone);
  CHECK(commented.batch == 16);

  try {
    PipelineConfig::parse("seed = 1\nstpes = 5\n");
    FAIL("expected an unknown-key error");
  } catch (const std::invalid_argument& e) {
    const std::string msg = e.what();
    CHECK(msg.find("stpes") != std::string::npos);
    CHECK(msg.find("line 2") != std::string::npos);
  }
  CHECK_THROWS_AS(PipelineConfig::parse("seed = banana\n"), std::invalid_argument);
  CHECK_THROWS_AS(PipelineConfig::parse("seed\n"), std::invalid_argument);
  CHECK_THROWS_AS(PipelineConfig::parse_file("/nonexistent/retgan.cfg"), std::exception);

  const TrainConfig t = cfg.train_config();
  CHECK(t.batch == cfg.batch);
  CHECK(t.steps == cfg.steps);
  CHECK(t.k == cfg.k);
  CHECK(t.seed == cfg.seed);
  const PretrainConfig p = cfg.pretrain_config();
  CHECK(p.steps == cfg.pretrain_steps);
  CHECK(p.batch == cfg.pretrain_batch);
  const OptimConfig o = cfg.optim_config();
  CHECK(o.iterations == cfg.latent_iters);
}

TEST_CASE("pipeline stages chain into a working end-to-end run") {
  TempDir dir;
  const PipelineConfig cfg = micro_config();
  const std::string corpus_dir = dir.file("corpus");
  const std::string embed_dir = dir.file("embed");

  run_gen_corpus(cfg, corpus_dir);
  CHECK(exists(corpus_dir + "/manifest.txt"));
  CHECK(exists(corpus_dir + "/captions.txt"));
  CHECK(exists(corpus_dir + "/images/img_00000.ppm"));

  // regenerating with the same seed rewrites identical artifacts
  const std::string manifest_before = slurp(corpus_dir + "/manifest.txt");
  const std::string captions_before = slurp(corpus_dir + "/captions.txt");
  run_gen_corpus(cfg, corpus_dir);
  CHECK(slurp(corpus_dir + "/manifest.txt") == manifest_before);
  CHECK(slurp(corpus_dir + "/captions.txt") == captions_before);

  std::ostringstream log;
  const PretrainArtifacts pre = run_pretrain(cfg, corpus_dir, embed_dir, log);
  CHECK(exists(pre.encoders_path));
  CHECK(exists(pre.text_embed_path));
  CHECK(exists(pre.image_embed_path));
  CHECK(pre.result.losses.size() == cfg.pretrain_steps);
  CHECK(log.str().find("recall_at_5=") != std::string::npos);

  const std::string map_path = dir.file("map.gmap");
  run_build_index(cfg.k, corpus_dir, embed_dir, map_path);
  const RetrievalMap map = load_retrieval_map(map_path);
  CHECK(map.k == cfg.k);
  CHECK(map.n_captions() == 2 * cfg.n_train);

  const std::string ckpt = dir.file("ckpt.ntck");
  std::ostringstream train_log;
  run_train(cfg, corpus_dir, embed_dir, map_path, ckpt, "", train_log);
  CHECK(exists(ckpt));
  CHECK(exists(ckpt + ".log"));
  const std::string lines = slurp(ckpt + ".log");
  CHECK(lines.find("step=1 ld=") != std::string::npos);
  CHECK(lines.find("step=3 ld=") != std::string::npos);
  CHECK(lines.find(" lg=") != std::string::npos);
  CHECK(lines.find(" lguide=") != std::string::npos);
  CHECK(train_log.str().find("step=2 ld=") != std::string::npos);

  const std::string img_path = dir.file("gen.ppm");
  run_generate(ckpt, "red circle on blue background", 2, 5, img_path);
  const Tensor img = read_ppm(img_path);
  CHECK(img.size() == 3072);

  // identical invocation is idempotent at the byte level
  const std::string img_bytes = slurp(img_path);
  run_generate(ckpt, "red circle on blue background", 2, 5, img_path);
  CHECK(slurp(img_path) == img_bytes);

  const std::string opt_dir = dir.file("opt");
  std::ostringstream opt_log;
  run_optimize(cfg, ckpt, "green square on black background",
               corpus_dir + "/images/img_00001.ppm", cfg.latent_iters, opt_dir, opt_log);
  CHECK(exists(opt_dir + "/iter_00000.ppm"));
  CHECK(exists(opt_dir + "/iter_00004.ppm"));
  CHECK(exists(opt_dir + "/final.ppm"));
  CHECK(exists(opt_dir + "/trace.txt"));
  std::istringstream trace(slurp(opt_dir + "/trace.txt"));
  int count = 0;
  double v = 0.0;
  while (trace >> v) ++count;
  CHECK(count == int(cfg.latent_iters) + 1);

  const std::string report_path = dir.file("report.txt");
  const EvalSummary summary = run_eval(cfg, ckpt, corpus_dir, report_path);
  const std::string report = slurp(report_path);
  CHECK(report == summary.report());
  for (const char* key : {"d_l2_a=", "ratio_l2=", "frechet_proxy=", "recall_at_5="})
    CHECK(report.find(key) != std::string::npos);
}

TEST_CASE("missing prerequisites surface as missing-artifact errors") {
  TempDir dir;
  const PipelineConfig cfg = micro_config();
  const std::string corpus_dir = dir.file("corpus");

  try {
    run_pretrain(cfg, corpus_dir, dir.file("embed"), std::cout);
    FAIL("expected a missing corpus error");
  } catch (const MissingArtifact& e) {
    CHECK(e.path.find("manifest.txt") != std::string::npos);
  }

  run_gen_corpus(cfg, corpus_dir);
  CHECK_THROWS_AS(run_build_index(cfg.k, corpus_dir, dir.file("embed"), dir.file("m.gmap")),
                  MissingArtifact);
  std::ostringstream log;
  CHECK_THROWS_AS(run_train(cfg, corpus_dir, dir.file("embed"), dir.file("m.gmap"),
                            dir.file("ckpt.ntck"), "", log),
                  MissingArtifact);
  CHECK_THROWS_AS(run_generate(dir.file("none.ntck"), "red circle on blue background", 0, 1,
                               dir.file("img.ppm")),
                  MissingArtifact);
  CHECK_THROWS_AS(run_eval(cfg, dir.file("none.ntck"), corpus_dir, dir.file("r.txt")),
                  MissingArtifact);
}

TEST_CASE("resumed pipeline training matches the uninterrupted checkpoint") {
  TempDir dir;
  PipelineConfig cfg = micro_config();
  cfg.steps = 6;
  const std::string corpus_dir = dir.file("corpus");
  const std::string embed_dir = dir.file("embed");
  run_gen_corpus(cfg, corpus_dir);
  std::ostringstream log;
  run_pretrain(cfg, corpus_dir, embed_dir, log);
  const std::string map_path = dir.file("map.gmap");
  run_build_index(cfg.k, corpus_dir, embed_dir, map_path);

  const std::string full_ckpt = dir.file("full.ntck");
  run_train(cfg, corpus_dir, embed_dir, map_path, full_ckpt, "", log);

  // twin run stopped at step 4, driven directly so the stored config
  // still says six steps
  const std::string head_ckpt = dir.file("head.ntck");
  {
    const Corpus corpus = load_corpus(corpus_dir);
    const RetrievalMap map = load_retrieval_map(map_path);
    const TensorStore enc = TensorStore::load(embed_dir + "/encoders.ntck");
    Trainer head(cfg.train_config(), corpus, load_image_encoder(enc, "enc_img"),
                 load_text_encoder(enc, "enc_txt"), map);
    for (int i = 0; i < 4; ++i) head.step();
    head.save(head_ckpt);
  }

  const std::string resumed_ckpt = dir.file("resumed.ntck");
  run_train(cfg, corpus_dir, embed_dir, map_path, resumed_ckpt, head_ckpt, log);
  CHECK(slurp(resumed_ckpt) == slurp(full_ckpt));  // identical bytes, not just close tensors
}

// ---- the installed binary ----

TEST_CASE("cli rejects bad invocations with usage text") {
  TempDir dir;
  CHECK(run_cli("") == 1);
  const std::string err = dir.file("err.txt");
  CHECK(run_cli("frobnicate", err) == 1);
  CHECK(slurp(err).find("Usage") != std::string::npos);
  CHECK(run_cli("--help") == 0);
  CHECK(run_cli("gen-corpus") == 1);  // missing required --out-dir
  CHECK(run_cli("train --corpus-dir x --index y --out z") == 1);  // --config required
}

TEST_CASE("cli exit codes separate missing artifacts from config failures") {
  TempDir dir;
  {
    std::ofstream bad(dir.file("bad.cfg"));
    bad << "seed = 4\nnot_a_key = 9\n";
  }
  {
    std::ofstream unparsable(dir.file("unparsable.cfg"));
    unparsable << "steps = twelve\n";
  }
  CHECK(run_cli("ablate --config " + dir.file("bad.cfg") + " --corpus-dir " + dir.str() +
                " --out-dir " + dir.file("out")) == 3);
  CHECK(run_cli("train --config " + dir.file("unparsable.cfg") + " --corpus-dir x --index y "
                "--out z") == 3);
  CHECK(run_cli("eval --config " + dir.file("missing.cfg") + " --ckpt c --corpus-dir d "
                "--report r") == 3);

  const std::string err = dir.file("err.txt");
  CHECK(run_cli("generate --ckpt " + dir.file("none.ntck") +
                " --caption \"red circle on blue background\" --ref-index 0 --out " +
                dir.file("o.ppm"), err) == 2);
  CHECK(slurp(err).find("none.ntck") != std::string::npos);

  std::ofstream cfg_file(dir.file("micro.cfg"));
  cfg_file << micro_config().serialize();
  cfg_file.close();
  CHECK(run_cli("build-index --config " + dir.file("micro.cfg") + " --corpus-dir " +
                dir.file("corpus") + " --out " + dir.file("m.gmap"), err) == 2);
}

TEST_CASE("cli drives the pipeline end to end") {
  TempDir dir;
  const std::string cfg_path = dir.file("micro.cfg");
  {
    std::ofstream f(cfg_path);
    f << micro_config().serialize();
  }
  const std::string corpus_dir = dir.file("corpus");
  const std::string err = dir.file("last.txt");

  CHECK(run_cli("gen-corpus --config " + cfg_path + " --out-dir " + corpus_dir) == 0);
  CHECK(run_cli("pretrain-embed --config " + cfg_path + " --corpus-dir " + corpus_dir) == 0);
  CHECK(exists(corpus_dir + "/embed/encoders.ntck"));  // default out-dir

  const std::string map_path = dir.file("map.gmap");
  CHECK(run_cli("build-index --config " + cfg_path + " --corpus-dir " + corpus_dir +
                " --out " + map_path) == 0);
  CHECK(exists(map_path));

  const std::string ckpt = dir.file("ckpt.ntck");
  CHECK(run_cli("train --config " + cfg_path + " --corpus-dir " + corpus_dir + " --index " +
                map_path + " --out " + ckpt, err) == 0);
  CHECK(exists(ckpt));
  CHECK(slurp(err).find("step=3 ld=") != std::string::npos);

  CHECK(run_cli("generate --ckpt " + ckpt +
                " --caption \"red circle on blue background\" --ref-index 1 --seed 9 --out " +
                dir.file("g.ppm")) == 0);
  CHECK(exists(dir.file("g.ppm")));

  CHECK(run_cli("eval --config " + cfg_path + " --ckpt " + ckpt + " --corpus-dir " +
                corpus_dir + " --report " + dir.file("report.txt"), err) == 0);
  CHECK(slurp(dir.file("report.txt")).find("recall_at_5=") != std::string::npos);
  CHECK(slurp(err).find("ratio_l2=") != std::string::npos);

  // out-of-pool reference index asks for a contract failure, exit 1
  CHECK(run_cli("generate --ckpt " + ckpt +
                " --caption \"red circle on blue background\" --ref-index 2000 --out " +
                dir.file("h.ppm"), err) == 1);
  CHECK(slurp(err).find("training pool") != std::string::npos);
}

TEST_CASE("cli ablation writes the four-variant table") {
  TempDir dir;
  PipelineConfig cfg = micro_config();
  cfg.steps = 2;
  cfg.pretrain_steps = 20;
  cfg.eval_captions = 2;
  const std::string cfg_path = dir.file("micro.cfg");
  {
    std::ofstream f(cfg_path);
    f << cfg.serialize();
  }
  const std::string corpus_dir = dir.file("corpus");
  CHECK(run_cli("gen-corpus --config " + cfg_path + " --out-dir " + corpus_dir) == 0);
  CHECK(run_cli("ablate --config " + cfg_path + " --corpus-dir " + corpus_dir + " --out-dir " +
                dir.file("ab")) == 0);
  const std::string table = slurp(dir.file("ab/ablation.txt"));
  CHECK(table.find("variant d_l2_a") != std::string::npos);
  for (const char* row : {"\nRet ", "\nRet-L1 ", "\nRet-Contrast ", "\nRet-Hyper-L1 "})
    CHECK(table.find(row) != std::string::npos);
  for (const char* variant : {"Ret", "Ret-L1", "Ret-Contrast", "Ret-Hyper-L1"}) {
    CHECK(exists(dir.file(std::string("ab/") + variant + "/ckpt.ntck")));
    CHECK(exists(dir.file(std::string("ab/") + variant + "/report.txt")));
  }
}
