#include "qv/checkpoint.hpp"

#include <cinttypes>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

namespace qv::train {

namespace {

constexpr char kMagic[4] = {'Q', 'V', 'A', 'E'};
constexpr std::uint32_t kVersion = 1;

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string join_channels(const std::vector<std::int64_t>& channels) {
  std::string out;
  for (std::size_t i = 0; i < channels.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(channels[i]);
  }
  return out;
}

std::vector<std::int64_t> parse_channels(const std::string& text) {
  std::vector<std::int64_t> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(std::stoll(item));
  return out;
}

std::string build_metadata(model::VaeModel<float>& model, Adam<float>& optimizer,
                           const TrainerState& state, std::int64_t param_scalars) {
  const auto& cfg = model.config();
  std::ostringstream meta;
  meta << "model=" << (model.quaternion() ? "qvae" : "vae") << "\n";
  meta << "channels=" << join_channels(cfg.encoder_channels) << "\n";
  meta << "latent=" << cfg.latent_dim << "\n";
  meta << "lambda=" << format_double(cfg.lambda_kl) << "\n";
  meta << "slope=" << format_double(cfg.leaky_slope) << "\n";
  meta << "kl_variant="
       << (cfg.kl_variant == stats::KlVariant::PaperExact ? "paper" : "real_augmented") << "\n";
  meta << "mc_samples=" << cfg.mc_samples << "\n";
  meta << "input_size=" << cfg.input_size << "\n";
  meta << "seed=" << cfg.seed << "\n";
  meta << "baseline_latent="
       << (cfg.baseline_latent == model::BaselineLatentPolicy::EqualRealDims ? "equal_real"
                                                                             : "equal_count")
       << "\n";
  meta << "epoch=" << state.epoch << "\n";
  meta << "step_in_epoch=" << state.step_in_epoch << "\n";
  meta << "lr=" << format_double(state.lr) << "\n";
  meta << "adam_step=" << optimizer.step_count() << "\n";
  meta << "adam_beta1=" << format_double(optimizer.config().beta1) << "\n";
  meta << "adam_beta2=" << format_double(optimizer.config().beta2) << "\n";
  meta << "adam_eps=" << format_double(optimizer.config().eps) << "\n";
  meta << "param_scalars=" << param_scalars << "\n";
  meta << "model_rng=" << state.model_rng << "\n";
  return meta.str();
}

std::map<std::string, std::string> parse_metadata(const std::string& text) {
  std::map<std::string, std::string> out;
  std::stringstream ss(text);
  std::string line;
  while (std::getline(ss, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    out[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return out;
}

const std::string& require(const std::map<std::string, std::string>& meta, const std::string& key) {
  auto it = meta.find(key);
  if (it == meta.end()) throw CheckpointError("checkpoint: missing metadata key " + key);
  return it->second;
}

void write_u32(std::ostream& out, std::uint32_t v) {
  unsigned char bytes[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                            static_cast<unsigned char>(v >> 16),
                            static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(bytes), 4);
}

void write_u64(std::ostream& out, std::uint64_t v) {
  unsigned char bytes[8];
  for (int i = 0; i < 8; ++i) bytes[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(bytes), 8);
}

std::uint32_t read_u32(std::istream& in) {
  unsigned char bytes[4];
  in.read(reinterpret_cast<char*>(bytes), 4);
  if (!in) throw CheckpointError("checkpoint: truncated header");
  return std::uint32_t(bytes[0]) | std::uint32_t(bytes[1]) << 8 | std::uint32_t(bytes[2]) << 16 |
         std::uint32_t(bytes[3]) << 24;
}

std::uint64_t read_u64(std::istream& in) {
  unsigned char bytes[8];
  in.read(reinterpret_cast<char*>(bytes), 8);
  if (!in) throw CheckpointError("checkpoint: truncated header");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= std::uint64_t(bytes[i]) << (8 * i);
  return v;
}

void write_buffer(std::ostream& out, const std::vector<float>& buffer) {
  out.write(reinterpret_cast<const char*>(buffer.data()),
            static_cast<std::streamsize>(buffer.size() * sizeof(float)));
}

void read_buffer(std::istream& in, std::vector<float>& buffer) {
  in.read(reinterpret_cast<char*>(buffer.data()),
          static_cast<std::streamsize>(buffer.size() * sizeof(float)));
  if (!in) throw CheckpointError("checkpoint: truncated parameter payload");
}

}  // namespace

void save_checkpoint(const std::string& path, model::VaeModel<float>& model,
                     Adam<float>& optimizer, const TrainerState& state) {
  auto params = model.parameters();
  std::int64_t scalars = 0;
  for (const auto* p : params) scalars += p->size();
  const std::string metadata = build_metadata(model, optimizer, state, scalars);

  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw Error("cannot write " + tmp);
    out.write(kMagic, 4);
    write_u32(out, kVersion);
    write_u64(out, metadata.size());
    out.write(metadata.data(), static_cast<std::streamsize>(metadata.size()));
    for (const auto* p : params) write_buffer(out, p->data());
    for (const auto& m : optimizer.first_moments()) write_buffer(out, m);
    for (const auto& v : optimizer.second_moments()) write_buffer(out, v);
    if (!out) throw Error("short write to " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) {
    std::remove(tmp.c_str());
    throw Error("cannot move " + tmp + " to " + path);
  }
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0) {
    throw CheckpointError("checkpoint: bad magic in " + path);
  }
  const std::uint32_t version = read_u32(in);
  if (version != kVersion) {
    throw CheckpointError("checkpoint: unsupported version " + std::to_string(version));
  }
  const std::uint64_t meta_len = read_u64(in);
  if (meta_len > (1ull << 20)) throw CheckpointError("checkpoint: implausible metadata length");
  std::string metadata(meta_len, '\0');
  in.read(metadata.data(), static_cast<std::streamsize>(meta_len));
  if (!in) throw CheckpointError("checkpoint: truncated metadata");
  const auto meta = parse_metadata(metadata);

  model::QvaeConfig cfg;
  cfg.encoder_channels = parse_channels(require(meta, "channels"));
  cfg.latent_dim = std::stoll(require(meta, "latent"));
  cfg.lambda_kl = std::stod(require(meta, "lambda"));
  cfg.leaky_slope = std::stod(require(meta, "slope"));
  cfg.kl_variant = require(meta, "kl_variant") == "paper" ? stats::KlVariant::PaperExact
                                                          : stats::KlVariant::RealAugmented;
  cfg.mc_samples = std::stoll(require(meta, "mc_samples"));
  cfg.input_size = std::stoll(require(meta, "input_size"));
  cfg.seed = std::stoull(require(meta, "seed"));
  cfg.baseline_latent = require(meta, "baseline_latent") == "equal_real"
                            ? model::BaselineLatentPolicy::EqualRealDims
                            : model::BaselineLatentPolicy::EqualCount;
  const bool quaternion = require(meta, "model") == "qvae";

  LoadedCheckpoint loaded;
  loaded.model = model::build_model<float>(cfg, quaternion);

  auto params = loaded.model->parameters();
  std::int64_t scalars = 0;
  for (const auto* p : params) scalars += p->size();
  if (scalars != std::stoll(require(meta, "param_scalars"))) {
    throw CheckpointError("checkpoint: parameter count mismatch");
  }
  for (auto* p : params) read_buffer(in, p->mutable_data());

  AdamConfig adam_cfg;
  adam_cfg.lr = std::stod(require(meta, "lr"));
  adam_cfg.beta1 = std::stod(require(meta, "adam_beta1"));
  adam_cfg.beta2 = std::stod(require(meta, "adam_beta2"));
  adam_cfg.eps = std::stod(require(meta, "adam_eps"));
  loaded.optimizer = std::make_unique<Adam<float>>(loaded.model->parameters(), adam_cfg);
  loaded.optimizer->set_step_count(std::stoll(require(meta, "adam_step")));
  for (auto& m : loaded.optimizer->first_moments()) read_buffer(in, m);
  for (auto& v : loaded.optimizer->second_moments()) read_buffer(in, v);

  // The payload must end exactly here.
  char extra;
  in.read(&extra, 1);
  if (!in.eof()) throw CheckpointError("checkpoint: trailing bytes in " + path);

  loaded.state.epoch = std::stoll(require(meta, "epoch"));
  loaded.state.step_in_epoch = std::stoll(require(meta, "step_in_epoch"));
  loaded.state.lr = std::stod(require(meta, "lr"));
  loaded.state.model_rng = require(meta, "model_rng");
  return loaded;
}

}  // namespace qv::train
