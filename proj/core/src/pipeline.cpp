#include "retgan/pipeline.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <memory>
#include <sstream>

#include "retgan/check.hpp"
#include "retgan/checkpoint.hpp"
#include "retgan/corpus.hpp"
#include "retgan/inference.hpp"
#include "retgan/ppm.hpp"
#include "retgan/retrieval.hpp"

namespace fs = std::filesystem;

namespace retgan {

namespace {
constexpr std::uint64_t kDomainEncImgInit = 0x45494d47;
constexpr std::uint64_t kDomainEncTxtInit = 0x45545854;
constexpr std::uint64_t kDomainGenerate = 0x47454e5a;

std::string metrics_line(const StepMetrics& m) {
  std::ostringstream o;
  o.precision(10);
  o << "step=" << m.step << " ld=" << m.loss_d << " lg=" << m.loss_gen
    << " lguide=" << m.loss_guide;
  return o.str();
}

Corpus load_corpus_checked(const std::string& corpus_dir) {
  require_file(corpus_dir + "/manifest.txt", "corpus manifest");
  return load_corpus(corpus_dir);
}

Tensor train_split_images(const Corpus& corpus) {
  Tensor out({corpus.manifest.n_train, num::kImagePixels});
  std::copy(corpus.images.data(),
            corpus.images.data() + out.size(), out.data());
  return out;
}

std::vector<std::vector<std::uint32_t>> train_split_tokens(const Corpus& corpus) {
  std::vector<std::vector<std::uint32_t>> tokens;
  for (std::size_t c = 0; c < 2 * corpus.manifest.n_train; ++c)
    tokens.push_back(corpus.captions[c].tokens);
  return tokens;
}
}  // namespace

void require_file(const std::string& path, const std::string& what) {
  if (!fs::exists(path)) throw MissingArtifact(path, what);
}

std::string default_embed_dir(const std::string& corpus_dir) { return corpus_dir + "/embed"; }

void run_gen_corpus(const PipelineConfig& cfg, const std::string& out_dir) {
  const Corpus corpus = generate_corpus(cfg.seed, cfg.n_train, cfg.n_test);
  save_corpus(corpus, out_dir);
}

PretrainArtifacts run_pretrain(const PipelineConfig& cfg, const std::string& corpus_dir,
                               const std::string& out_dir, std::ostream& log) {
  const Corpus corpus = load_corpus_checked(corpus_dir);
  ImageEncoderParams enc_img(cfg.embed_img_hidden);
  TextEncoderParams enc_txt(cfg.embed_txt_hidden);
  Rng base(cfg.seed);
  Rng ri = base.fork(kDomainEncImgInit), rt = base.fork(kDomainEncTxtInit);
  enc_img.init(ri);
  enc_txt.init(rt);

  PretrainArtifacts out;
  out.result = pretrain_contrastive(enc_img, enc_txt, corpus, cfg.pretrain_config(),
                                    [&](std::size_t step, double loss) {
                                      if (step % 100 == 0 || step == cfg.pretrain_steps)
                                        log << "pretrain step=" << step << " loss=" << loss
                                            << "\n";
                                    });
  log << "pretrain recall_at_5=" << out.result.recall_at_5 << "\n";

  fs::create_directories(out_dir);
  TensorStore store;
  for (auto& [name, t] : enc_img.named("enc_img")) store.put(name, *t);
  for (auto& [name, t] : enc_txt.named("enc_txt")) store.put(name, *t);
  out.encoders_path = out_dir + "/encoders.ntck";
  store.save(out.encoders_path);

  out.text_embed_path = out_dir + "/train_text.embx";
  out.image_embed_path = out_dir + "/train_image.embx";
  save_embeddings(out.text_embed_path, encode_texts(enc_txt, train_split_tokens(corpus)));
  save_embeddings(out.image_embed_path, encode_images(enc_img, train_split_images(corpus)));
  return out;
}

void run_build_index(std::size_t k, const std::string& corpus_dir,
                     const std::string& embed_dir, const std::string& out_path) {
  const std::string text_path = embed_dir + "/train_text.embx";
  const std::string image_path = embed_dir + "/train_image.embx";
  require_file(corpus_dir + "/manifest.txt", "corpus manifest");
  require_file(text_path, "caption embedding cache");
  require_file(image_path, "image embedding cache");
  const Corpus corpus = load_corpus(corpus_dir);
  const Tensor text = load_embeddings(text_path);
  const Tensor image = load_embeddings(image_path);
  RETGAN_CHECK(text.rows() == 2 * corpus.manifest.n_train &&
                   image.rows() == corpus.manifest.n_train,
               "build-index: embedding caches cover " << text.rows() << " captions and "
                                                      << image.rows()
                                                      << " images, which does not match "
                                                      << corpus_dir);
  const Tensor sim = build_similarity_matrix(text, image);
  const RetrievalMap map = topk_map(sim, k);
  if (const fs::path parent = fs::path(out_path).parent_path(); !parent.empty())
    fs::create_directories(parent);
  save_retrieval_map(out_path, map);
}

void run_train(const PipelineConfig& cfg, const std::string& corpus_dir,
               const std::string& embed_dir, const std::string& index_path,
               const std::string& out_path, const std::string& resume_path, std::ostream& log) {
  const Corpus corpus = load_corpus_checked(corpus_dir);
  require_file(index_path, "retrieval map");
  const RetrievalMap map = load_retrieval_map(index_path);

  std::unique_ptr<Trainer> trainer;
  if (resume_path.empty()) {
    const std::string encoders_path = embed_dir + "/encoders.ntck";
    require_file(encoders_path, "pretrained encoder checkpoint");
    const TensorStore enc_store = TensorStore::load(encoders_path);
    const ImageEncoderParams enc_img = load_image_encoder(enc_store, "enc_img");
    const TextEncoderParams enc_txt = load_text_encoder(enc_store, "enc_txt");
    trainer = std::make_unique<Trainer>(cfg.train_config(), corpus, enc_img, enc_txt, map);
  } else {
    require_file(resume_path, "training checkpoint");
    trainer = std::make_unique<Trainer>(resume_path, corpus, map);
  }

  if (const fs::path parent = fs::path(out_path).parent_path(); !parent.empty())
    fs::create_directories(parent);
  std::ofstream step_log(out_path + ".log", std::ios::trunc);
  RETGAN_CHECK_RUNTIME(step_log.good(), "train: cannot open log " << out_path << ".log");
  trainer->run([&](const StepMetrics& m) {
    const std::string line = metrics_line(m);
    log << line << "\n";
    step_log << line << "\n";
    if (cfg.checkpoint_every > 0 && m.step % cfg.checkpoint_every == 0 &&
        m.step < trainer->config().steps)
      trainer->save(out_path);
  });
  trainer->save(out_path);
}

void run_generate(const std::string& ckpt_path, const std::string& caption_text,
                  std::size_t ref_index, std::uint64_t seed, const std::string& out_path) {
  require_file(ckpt_path, "training checkpoint");
  const InferenceModel m = InferenceModel::load(ckpt_path);
  const std::vector<std::uint32_t> tokens = tokenize(caption_text);
  Rng zr = Rng(seed).fork(kDomainGenerate);
  Tensor z({kNoiseDim});
  for (std::size_t j = 0; j < kNoiseDim; ++j) z[j] = zr.normal();
  const Tensor image = generate(m, tokens, ref_index, z);
  if (const fs::path parent = fs::path(out_path).parent_path(); !parent.empty())
    fs::create_directories(parent);
  write_ppm(out_path, image);
}

void run_optimize(const PipelineConfig& cfg, const std::string& ckpt_path,
                  const std::string& caption_text, const std::string& ref_image_path,
                  std::size_t iterations, const std::string& out_dir, std::ostream& log) {
  require_file(ckpt_path, "training checkpoint");
  require_file(ref_image_path, "reference image");
  const InferenceModel m = InferenceModel::load(ckpt_path);
  const Tensor reference = read_ppm(ref_image_path);
  OptimConfig oc = cfg.optim_config();
  oc.iterations = iterations;

  std::vector<std::size_t> snaps;
  for (std::size_t s : {std::size_t{0}, std::size_t{30}, std::size_t{100}, iterations})
    if (s <= iterations && std::find(snaps.begin(), snaps.end(), s) == snaps.end())
      snaps.push_back(s);

  const OptimizeResult result =
      latent_optimize(m, tokenize(caption_text), reference, oc, snaps);

  fs::create_directories(out_dir);
  for (std::size_t i = 0; i < snaps.size(); ++i) {
    std::ostringstream name;
    name << out_dir << "/iter_" << std::setw(5) << std::setfill('0') << snaps[i] << ".ppm";
    write_ppm(name.str(), result.snapshots[i]);
  }
  write_ppm(out_dir + "/final.ppm", result.image);
  std::ofstream trace(out_dir + "/trace.txt", std::ios::trunc);
  trace.precision(17);
  for (double v : result.trace) trace << v << "\n";
  log << "optimize initial=" << result.trace.front() << " final=" << result.trace.back()
      << "\n";
}

EvalSummary run_eval(const PipelineConfig& cfg, const std::string& ckpt_path,
                     const std::string& corpus_dir, const std::string& report_path) {
  require_file(ckpt_path, "training checkpoint");
  const Corpus corpus = load_corpus_checked(corpus_dir);
  const InferenceModel m = InferenceModel::load(ckpt_path);
  const EvalSummary summary =
      evaluate_model(m, corpus, cfg.eval_captions, cfg.eval_samples, cfg.seed);
  if (!report_path.empty()) {
    if (const fs::path parent = fs::path(report_path).parent_path(); !parent.empty())
      fs::create_directories(parent);
    std::ofstream report(report_path, std::ios::trunc);
    RETGAN_CHECK_RUNTIME(report.good(), "eval: cannot open report " << report_path);
    report << summary.report();
  }
  return summary;
}

void run_ablate(const PipelineConfig& cfg, const std::string& corpus_dir,
                const std::string& out_dir, std::ostream& log) {
  load_corpus_checked(corpus_dir);  // fail early with the path
  fs::create_directories(out_dir);

  const std::string embed_dir = out_dir + "/embed";
  log << "ablate: pretraining shared encoders\n";
  run_pretrain(cfg, corpus_dir, embed_dir, log);
  const std::string index_path = out_dir + "/map.gmap";
  run_build_index(cfg.k, corpus_dir, embed_dir, index_path);

  struct Variant {
    const char* name;
    Guidance guidance;
    EncoderMode mode;
  };
  const Variant variants[] = {
      {"Ret", Guidance::kNone, EncoderMode::kDirect},
      {"Ret-L1", Guidance::kL1, EncoderMode::kDirect},
      {"Ret-Contrast", Guidance::kContrastive, EncoderMode::kDirect},
      {"Ret-Hyper-L1", Guidance::kL1, EncoderMode::kHyper},
  };

  std::ofstream table(out_dir + "/ablation.txt", std::ios::trunc);
  RETGAN_CHECK_RUNTIME(table.good(), "ablate: cannot open " << out_dir << "/ablation.txt");
  table << "variant d_l2_a d_l2_b ratio_l2 d_feat_a d_feat_b ratio_feat frechet_proxy "
           "recall_at_5\n";
  table.precision(10);
  for (const Variant& v : variants) {
    PipelineConfig vcfg = cfg;
    vcfg.guidance = v.guidance;
    vcfg.encoder_mode = v.mode;
    const std::string vdir = out_dir + "/" + v.name;
    fs::create_directories(vdir);
    const std::string ckpt = vdir + "/ckpt.ntck";
    log << "ablate: training " << v.name << "\n";
    std::ofstream sink;  // per-step lines go to the .log file only
    run_train(vcfg, corpus_dir, embed_dir, index_path, ckpt, "", sink);
    const EvalSummary s = run_eval(vcfg, ckpt, corpus_dir, vdir + "/report.txt");
    table << v.name << " " << s.diversity.vary_noise.d_l2 << " " << s.diversity.vary_both.d_l2
          << " " << s.diversity.ratio_l2 << " " << s.diversity.vary_noise.d_feat << " "
          << s.diversity.vary_both.d_feat << " " << s.diversity.ratio_feat << " "
          << s.frechet.value << " " << s.recall_at_5 << "\n";
    log << "ablate: " << v.name << " ratio_l2=" << s.diversity.ratio_l2
        << " ratio_feat=" << s.diversity.ratio_feat << " frechet=" << s.frechet.value
        << " recall_at_5=" << s.recall_at_5 << "\n";
  }
}

}  // namespace retgan
