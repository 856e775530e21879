#include "flexmuse/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "flexmuse/error.hpp"

namespace flexmuse {

namespace {

constexpr char kMagic[4] = {'F', 'M', 'U', 'S'};

template <class T>
void write_pod(std::ostream& out, T v) {
  static_assert(std::is_trivially_copyable_v<T>);
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T read_pod(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw ParseError("checkpoint: truncated file");
  return v;
}

void write_string(std::ostream& out, const std::string& s) {
  write_pod<std::uint64_t>(out, s.size());
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_string(std::istream& in) {
  const auto n = read_pod<std::uint64_t>(in);
  std::string s(n, '\0');
  in.read(s.data(), static_cast<std::streamsize>(n));
  if (!in) throw ParseError("checkpoint: truncated string");
  return s;
}

void write_vec(std::ostream& out, const Vec& v) {
  write_pod<std::uint64_t>(out, v.size());
  out.write(reinterpret_cast<const char*>(v.data()),
            static_cast<std::streamsize>(v.size() * sizeof(double)));
}

Vec read_vec(std::istream& in) {
  const auto n = read_pod<std::uint64_t>(in);
  Vec v(n);
  in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(double)));
  if (!in) throw ParseError("checkpoint: truncated vector");
  return v;
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint: " + path);

  out.write(kMagic, 4);
  write_pod<std::uint32_t>(out, ckpt.version);
  const auto& cfg = ckpt.lm.cfg;
  for (std::uint64_t s : {cfg.feature_dim, cfg.vocab_size, cfg.d_model, cfg.n_layers, cfg.n_heads,
                          cfg.d_ff, cfg.max_len}) {
    write_pod<std::uint64_t>(out, s);
  }
  write_string(out, ckpt.config_echo);

  write_pod<std::uint64_t>(out, ckpt.vocab.tokens.size());
  for (const auto& t : ckpt.vocab.tokens) write_string(out, t);

  write_vec(out, ckpt.fusion.w_q);
  write_vec(out, ckpt.fusion.w_k);
  write_vec(out, ckpt.fusion.w_v);
  write_vec(out, ckpt.fusion.w_lambda);

  visit_param_blocks(const_cast<LMParams&>(ckpt.lm),
                     [&](const std::string&, Vec& v) { write_vec(out, v); });

  for (std::uint64_t w : ckpt.rng_state) write_pod<std::uint64_t>(out, w);
  if (!out) throw IoError("checkpoint write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path);

  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0) {
    throw ParseError("checkpoint: bad magic in " + path);
  }
  Checkpoint ckpt;
  ckpt.version = read_pod<std::uint32_t>(in);
  if (ckpt.version != 1) {
    throw ParseError("checkpoint: unsupported version " + std::to_string(ckpt.version));
  }
  LMConfig cfg;
  cfg.feature_dim = read_pod<std::uint64_t>(in);
  cfg.vocab_size = read_pod<std::uint64_t>(in);
  cfg.d_model = read_pod<std::uint64_t>(in);
  cfg.n_layers = read_pod<std::uint64_t>(in);
  cfg.n_heads = read_pod<std::uint64_t>(in);
  cfg.d_ff = read_pod<std::uint64_t>(in);
  cfg.max_len = read_pod<std::uint64_t>(in);
  ckpt.config_echo = read_string(in);

  const auto n_tokens = read_pod<std::uint64_t>(in);
  std::vector<std::string> toks(n_tokens);
  for (auto& t : toks) t = read_string(in);
  if (toks.size() < 4) throw ParseError("checkpoint: vocabulary too small");
  ckpt.vocab.tokens = toks;
  for (std::size_t i = 0; i < toks.size(); ++i) ckpt.vocab.index[toks[i]] = static_cast<int>(i);

  ckpt.fusion.w_q = read_vec(in);
  ckpt.fusion.w_k = read_vec(in);
  ckpt.fusion.w_v = read_vec(in);
  ckpt.fusion.w_lambda = read_vec(in);

  // Shape the parameter struct from the header, then fill block-by-block.
  Rng dummy(0);
  ckpt.lm = LMParams::init(cfg, dummy, 0.0);
  visit_param_blocks(ckpt.lm, [&](const std::string& name, Vec& v) {
    Vec loaded = read_vec(in);
    if (loaded.size() != v.size()) {
      throw ParseError("checkpoint: block '" + name + "' has size " +
                       std::to_string(loaded.size()) + ", expected " + std::to_string(v.size()));
    }
    v = std::move(loaded);
  });

  for (auto& w : ckpt.rng_state) w = read_pod<std::uint64_t>(in);
  return ckpt;
}

}  // namespace flexmuse
