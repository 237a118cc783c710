#pragma once

#include <cstdint>
#include <ostream>
#include <stdexcept>
#include <string>

#include "retgan/evalmetrics.hpp"
#include "retgan/pipeline_config.hpp"

namespace retgan {

// Stage orchestration shared by the CLI and by integration tests: each
// run_* consumes artifacts on disk and writes the next ones. Paths to
// required inputs that do not exist raise MissingArtifact so the CLI can
// exit with a dedicated status and the offending path.

struct MissingArtifact : std::runtime_error {
  std::string path;
  MissingArtifact(const std::string& p, const std::string& what)
      : std::runtime_error("missing " + what + ": " + p), path(p) {}
};

void require_file(const std::string& path, const std::string& what);

/// Where pretrain-embed puts its outputs unless told otherwise.
std::string default_embed_dir(const std::string& corpus_dir);

void run_gen_corpus(const PipelineConfig& cfg, const std::string& out_dir);

struct PretrainArtifacts {
  PretrainResult result;
  std::string encoders_path;
  std::string text_embed_path;
  std::string image_embed_path;
};
PretrainArtifacts run_pretrain(const PipelineConfig& cfg, const std::string& corpus_dir,
                               const std::string& out_dir, std::ostream& log);

void run_build_index(std::size_t k, const std::string& corpus_dir,
                     const std::string& embed_dir, const std::string& out_path);

/// resume_path empty means a fresh run; per-step metrics go to `log` as
/// "step=<n> ld=<f> lg=<f> lguide=<f>" lines and to <out>.log next to the
/// checkpoint.
void run_train(const PipelineConfig& cfg, const std::string& corpus_dir,
               const std::string& embed_dir, const std::string& index_path,
               const std::string& out_path, const std::string& resume_path, std::ostream& log);

void run_generate(const std::string& ckpt_path, const std::string& caption_text,
                  std::size_t ref_index, std::uint64_t seed, const std::string& out_path);

/// Writes iter_<n>.ppm snapshots (0, 30, 100 and the final iteration),
/// final.ppm and trace.txt under out_dir.
void run_optimize(const PipelineConfig& cfg, const std::string& ckpt_path,
                  const std::string& caption_text, const std::string& ref_image_path,
                  std::size_t iterations, const std::string& out_dir, std::ostream& log);

EvalSummary run_eval(const PipelineConfig& cfg, const std::string& ckpt_path,
                     const std::string& corpus_dir, const std::string& report_path);

/// Trains and evaluates the four guidance/encoder variants on a shared
/// corpus and seed, writing one metrics row per variant to
/// out_dir/ablation.txt.
void run_ablate(const PipelineConfig& cfg, const std::string& corpus_dir,
                const std::string& out_dir, std::ostream& log);

}  // namespace retgan
