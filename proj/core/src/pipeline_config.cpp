#include "retgan/pipeline_config.hpp"

#include <fstream>
#include <sstream>

#include "retgan/check.hpp"

namespace retgan {

namespace {
std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  RETGAN_CHECK(false, "config: key '" << key << "' expects a boolean, got '" << value << "'");
  return false;
}

double parse_f64(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const double v = std::stod(value, &used);
    RETGAN_CHECK(used == value.size(), "config: trailing junk");
    return v;
  } catch (const std::exception&) {
    RETGAN_CHECK(false, "config: key '" << key << "' expects a number, got '" << value << "'");
  }
  return 0.0;
}

std::uint64_t parse_u64(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const unsigned long long v = std::stoull(value, &used);
    RETGAN_CHECK(used == value.size() && value[0] != '-', "config: trailing junk");
    return v;
  } catch (const std::exception&) {
    RETGAN_CHECK(false,
                 "config: key '" << key << "' expects a non-negative integer, got '" << value
                                 << "'");
  }
  return 0;
}
}  // namespace

PipelineConfig PipelineConfig::parse(const std::string& text) {
  PipelineConfig cfg;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    RETGAN_CHECK(eq != std::string::npos,
                 "config: line " << lineno << " is not 'key = value': '" << t << "'");
    const std::string key = trim(t.substr(0, eq));
    const std::string value = trim(t.substr(eq + 1));
    RETGAN_CHECK(!key.empty() && !value.empty(),
                 "config: line " << lineno << " is missing a key or value");

    if (key == "seed") cfg.seed = parse_u64(key, value);
    else if (key == "n_train") cfg.n_train = parse_u64(key, value);
    else if (key == "n_test") cfg.n_test = parse_u64(key, value);
    else if (key == "k") cfg.k = parse_u64(key, value);
    else if (key == "lambda") cfg.lambda = parse_f64(key, value);
    else if (key == "lr_g") cfg.lr_g = parse_f64(key, value);
    else if (key == "lr_d") cfg.lr_d = parse_f64(key, value);
    else if (key == "batch") cfg.batch = parse_u64(key, value);
    else if (key == "steps") cfg.steps = parse_u64(key, value);
    else if (key == "guidance") cfg.guidance = guidance_from(value);
    else if (key == "encoder_mode") cfg.encoder_mode = encoder_mode_from(value);
    else if (key == "hyper_additive") cfg.hyper_additive = parse_bool(key, value);
    else if (key == "gan_loss") cfg.gan_loss = gan_loss_from(value);
    else if (key == "tau_g") cfg.tau_g = parse_f64(key, value);
    else if (key == "checkpoint_every") cfg.checkpoint_every = parse_u64(key, value);
    else if (key == "pretrain_batch") cfg.pretrain_batch = parse_u64(key, value);
    else if (key == "pretrain_steps") cfg.pretrain_steps = parse_u64(key, value);
    else if (key == "pretrain_lr") cfg.pretrain_lr = parse_f64(key, value);
    else if (key == "tau") cfg.tau = parse_f64(key, value);
    else if (key == "embed_img_hidden") cfg.embed_img_hidden = parse_u64(key, value);
    else if (key == "embed_txt_hidden") cfg.embed_txt_hidden = parse_u64(key, value);
    else if (key == "eval_captions") cfg.eval_captions = parse_u64(key, value);
    else if (key == "eval_samples") cfg.eval_samples = parse_u64(key, value);
    else if (key == "latent_lr") cfg.latent_lr = parse_f64(key, value);
    else if (key == "latent_beta1") cfg.latent_beta1 = parse_f64(key, value);
    else if (key == "latent_beta2") cfg.latent_beta2 = parse_f64(key, value);
    else if (key == "latent_iters") cfg.latent_iters = parse_u64(key, value);
    else RETGAN_CHECK(false, "config: unknown key '" << key << "' on line " << lineno);
  }
  return cfg;
}

PipelineConfig PipelineConfig::parse_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  RETGAN_CHECK(in.good(), "config: cannot open '" << path << "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse(buf.str());
}

std::string PipelineConfig::serialize() const {
  std::ostringstream o;
  o.precision(17);
  o << "seed = " << seed << "\n";
  o << "n_train = " << n_train << "\n";
  o << "n_test = " << n_test << "\n";
  o << "k = " << k << "\n";
  o << "lambda = " << lambda << "\n";
  o << "lr_g = " << lr_g << "\n";
  o << "lr_d = " << lr_d << "\n";
  o << "batch = " << batch << "\n";
  o << "steps = " << steps << "\n";
  o << "guidance = " << guidance_name(guidance) << "\n";
  o << "encoder_mode = " << encoder_mode_name(encoder_mode) << "\n";
  o << "hyper_additive = " << (hyper_additive ? "true" : "false") << "\n";
  o << "gan_loss = " << gan_loss_name(gan_loss) << "\n";
  o << "tau_g = " << tau_g << "\n";
  o << "checkpoint_every = " << checkpoint_every << "\n";
  o << "pretrain_batch = " << pretrain_batch << "\n";
  o << "pretrain_steps = " << pretrain_steps << "\n";
  o << "pretrain_lr = " << pretrain_lr << "\n";
  o << "tau = " << tau << "\n";
  o << "embed_img_hidden = " << embed_img_hidden << "\n";
  o << "embed_txt_hidden = " << embed_txt_hidden << "\n";
  o << "eval_captions = " << eval_captions << "\n";
  o << "eval_samples = " << eval_samples << "\n";
  o << "latent_lr = " << latent_lr << "\n";
  o << "latent_beta1 = " << latent_beta1 << "\n";
  o << "latent_beta2 = " << latent_beta2 << "\n";
  o << "latent_iters = " << latent_iters << "\n";
  return o.str();
}

TrainConfig PipelineConfig::train_config() const {
  TrainConfig t;
  t.lambda = lambda;
  t.k = k;
  t.lr_g = lr_g;
  t.lr_d = lr_d;
  t.batch = batch;
  t.steps = steps;
  t.guidance = guidance;
  t.encoder_mode = encoder_mode;
  t.hyper_additive = hyper_additive;
  t.gan_loss = gan_loss;
  t.seed = seed;
  t.tau_g = tau_g;
  return t;
}

PretrainConfig PipelineConfig::pretrain_config() const {
  PretrainConfig p;
  p.batch = pretrain_batch;
  p.steps = pretrain_steps;
  p.lr = pretrain_lr;
  p.temperature = tau;
  p.seed = seed;
  return p;
}

OptimConfig PipelineConfig::optim_config() const {
  OptimConfig o;
  o.lr = latent_lr;
  o.beta1 = latent_beta1;
  o.beta2 = latent_beta2;
  o.iterations = latent_iters;
  return o;
}

}  // namespace retgan
