#include "flexmuse/lm.hpp"

#include <algorithm>
#include <cmath>

#include "flexmuse/error.hpp"

namespace flexmuse {

namespace {

constexpr double kLnEps = 1e-5;
constexpr double kGeluC = 0.7978845608028653559;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;

double gelu(double x) {
  const double u = kGeluC * (x + kGeluA * x * x * x);
  return 0.5 * x * (1.0 + std::tanh(u));
}

double gelu_grad(double x) {
  const double u = kGeluC * (x + kGeluA * x * x * x);
  const double t = std::tanh(u);
  const double du = kGeluC * (1.0 + 3.0 * kGeluA * x * x);
  return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du;
}

// y[r] = W x[r] for row-major W (out x in).
void matvec(const Vec& w, const double* x, double* y, std::size_t out, std::size_t in) {
  for (std::size_t o = 0; o < out; ++o) {
    double s = 0.0;
    const double* row = w.data() + o * in;
    for (std::size_t i = 0; i < in; ++i) s += row[i] * x[i];
    y[o] = s;
  }
}

// dx += W^T dy; dW += dy x^T
void matvec_backward(const Vec& w, const double* x, const double* dy, double* dx, double* dw,
                     std::size_t out, std::size_t in) {
  for (std::size_t o = 0; o < out; ++o) {
    const double g = dy[o];
    const double* row = w.data() + o * in;
    double* drow = dw + o * in;
    if (dx) {
      for (std::size_t i = 0; i < in; ++i) {
        dx[i] += row[i] * g;
        drow[i] += x[i] * g;
      }
    } else {
      for (std::size_t i = 0; i < in; ++i) drow[i] += x[i] * g;
    }
  }
}

struct LnCache {
  Vec xhat;  // T x d
  Vec rstd;  // T
};

void layernorm(const Vec& x, const Vec& g, const Vec& b, std::size_t T, std::size_t d, Vec& y,
               LnCache& c) {
  y.resize(T * d);
  c.xhat.resize(T * d);
  c.rstd.resize(T);
  for (std::size_t t = 0; t < T; ++t) {
    const double* xr = x.data() + t * d;
    double mean = 0.0;
    for (std::size_t j = 0; j < d; ++j) mean += xr[j];
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double c0 = xr[j] - mean;
      var += c0 * c0;
    }
    var /= static_cast<double>(d);
    const double rstd = 1.0 / std::sqrt(var + kLnEps);
    c.rstd[t] = rstd;
    for (std::size_t j = 0; j < d; ++j) {
      const double xh = (xr[j] - mean) * rstd;
      c.xhat[t * d + j] = xh;
      y[t * d + j] = g[j] * xh + b[j];
    }
  }
}

void layernorm_backward(const Vec& dy, const LnCache& c, const Vec& g, std::size_t T,
                        std::size_t d, Vec& dx, Vec& dg, Vec& db) {
  for (std::size_t t = 0; t < T; ++t) {
    const double* dyr = dy.data() + t * d;
    const double* xh = c.xhat.data() + t * d;
    double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double dxh = dyr[j] * g[j];
      sum_dxhat += dxh;
      sum_dxhat_xhat += dxh * xh[j];
      dg[j] += dyr[j] * xh[j];
      db[j] += dyr[j];
    }
    const double inv_d = 1.0 / static_cast<double>(d);
    for (std::size_t j = 0; j < d; ++j) {
      const double dxh = dyr[j] * g[j];
      dx[t * d + j] += c.rstd[t] * (dxh - inv_d * sum_dxhat - xh[j] * inv_d * sum_dxhat_xhat);
    }
  }
}

}  // namespace

struct LayerCache {
  Vec x_in;          // T x d, block input
  LnCache ln1;
  Vec xn1;           // T x d
  Vec q, k, v;       // T x d
  Vec attn;          // H x T x T row-major
  Vec ctx;           // T x d (concatenated heads)
  Vec x_mid;         // T x d (after attention residual)
  LnCache ln2;
  Vec xn2;           // T x d
  Vec h_pre, h_act;  // T x d_ff
};

struct LMForwardCache {
  std::size_t T = 0;
  std::vector<int> tokens;
  Vec prefix;
  Vec x0;  // T x d, embedded input
  std::vector<LayerCache> layers;
  Vec x_last;  // T x d, input of final layernorm
  LnCache lnf;
  Vec xf;               // T x d
  std::vector<Vec> probs;  // rows (n+1) x vocab, probability space
};

Vocab Vocab::build(const std::vector<std::string>& symbols) {
  Vocab v;
  v.tokens = {"<pad>", "<bos>", "<eos>", "<img>"};
  for (const auto& s : symbols) {
    if (v.index.count(s) || s == "<pad>" || s == "<bos>" || s == "<eos>" || s == "<img>") continue;
    v.index.emplace(s, static_cast<int>(v.tokens.size()));
    v.tokens.push_back(s);
  }
  for (int i = 0; i < 4; ++i) v.index[v.tokens[i]] = i;
  return v;
}

int Vocab::id_of(const std::string& tok) const {
  auto it = index.find(tok);
  return it == index.end() ? -1 : it->second;
}

namespace {

bool is_cjk(char32_t cp) {
  return (cp >= 0x4E00 && cp <= 0x9FFF) || (cp >= 0x3400 && cp <= 0x4DBF) ||
         (cp >= 0xF900 && cp <= 0xFAFF) || (cp >= 0x3000 && cp <= 0x303F);
}

// Minimal UTF-8 decoding; invalid bytes pass through as single codepoints.
std::vector<std::pair<char32_t, std::string>> decode_utf8(const std::string& s) {
  std::vector<std::pair<char32_t, std::string>> out;
  std::size_t i = 0;
  while (i < s.size()) {
    const unsigned char c = static_cast<unsigned char>(s[i]);
    std::size_t len = 1;
    char32_t cp = c;
    if ((c & 0x80) == 0) {
      len = 1;
    } else if ((c & 0xE0) == 0xC0) {
      len = 2;
      cp = c & 0x1F;
    } else if ((c & 0xF0) == 0xE0) {
      len = 3;
      cp = c & 0x0F;
    } else if ((c & 0xF8) == 0xF0) {
      len = 4;
      cp = c & 0x07;
    }
    if (i + len > s.size()) len = 1;
    for (std::size_t k = 1; k < len; ++k) cp = (cp << 6) | (static_cast<unsigned char>(s[i + k]) & 0x3F);
    out.emplace_back(cp, s.substr(i, len));
    i += len;
  }
  return out;
}

}  // namespace

std::vector<int> tokenize(const std::string& text, const Vocab& vocab, TokenizeStats* stats) {
  std::vector<int> out;
  std::string latin_run;
  auto flush = [&]() {
    if (latin_run.empty()) return;
    const int id = vocab.id_of(latin_run);
    if (id >= 0) {
      out.push_back(id);
    } else if (stats) {
      ++stats->unknown_dropped;
    }
    latin_run.clear();
  };
  for (const auto& [cp, bytes] : decode_utf8(text)) {
    if (cp == U' ' || cp == U'\t' || cp == U'\n' || cp == U'\r') {
      flush();
    } else if (is_cjk(cp)) {
      flush();
      const int id = vocab.id_of(bytes);
      if (id >= 0) {
        out.push_back(id);
      } else if (stats) {
        ++stats->unknown_dropped;
      }
    } else {
      latin_run += bytes;
    }
  }
  flush();
  return out;
}

std::string detokenize(const std::vector<int>& ids, const Vocab& vocab) {
  std::string out;
  bool prev_latin = false;
  for (const int id : ids) {
    if (id < 0 || id >= static_cast<int>(vocab.size())) continue;
    if (id == kPad || id == kBos || id == kEos) continue;
    const std::string& tok = vocab.tokens[id];
    const auto cps = decode_utf8(tok);
    const bool latin = !cps.empty() && !is_cjk(cps.front().first);
    if (latin && prev_latin) out += ' ';
    out += tok;
    prev_latin = latin;
  }
  return out;
}

LMParams LMParams::init(const LMConfig& cfg, Rng& rng, double scale) {
  if (cfg.vocab_size == 0) throw ConfigError("LMParams::init: vocab_size is zero");
  if (cfg.d_model % cfg.n_heads != 0) throw ConfigError("LMParams::init: n_heads must divide d_model");
  LMParams p;
  p.cfg = cfg;
  auto gauss = [&](std::size_t n) {
    Vec v(n);
    for (auto& x : v) x = rng.normal() * scale;
    return v;
  };
  const std::size_t d = cfg.d_model;
  p.tok_emb = gauss(cfg.vocab_size * d);
  p.pos_emb = gauss(cfg.max_len * d);
  p.prefix_w = gauss(d * cfg.feature_dim);
  p.layers.resize(cfg.n_layers);
  for (auto& L : p.layers) {
    L.ln1_g.assign(d, 1.0);
    L.ln1_b.assign(d, 0.0);
    L.wq = gauss(d * d);
    L.wk = gauss(d * d);
    L.wv = gauss(d * d);
    L.wo = gauss(d * d);
    L.ln2_g.assign(d, 1.0);
    L.ln2_b.assign(d, 0.0);
    L.w1 = gauss(cfg.d_ff * d);
    L.b1.assign(cfg.d_ff, 0.0);
    L.w2 = gauss(d * cfg.d_ff);
    L.b2.assign(d, 0.0);
  }
  p.lnf_g.assign(d, 1.0);
  p.lnf_b.assign(d, 0.0);
  p.out_w.assign(cfg.vocab_size * d, 0.0);
  return p;
}

LMParams LMParams::zeros_like(const LMParams& src) {
  LMParams p;
  p.cfg = src.cfg;
  auto zero = [](const Vec& v) { return Vec(v.size(), 0.0); };
  p.tok_emb = zero(src.tok_emb);
  p.pos_emb = zero(src.pos_emb);
  p.prefix_w = zero(src.prefix_w);
  p.layers.resize(src.layers.size());
  for (std::size_t l = 0; l < src.layers.size(); ++l) {
    const auto& s = src.layers[l];
    auto& L = p.layers[l];
    L.ln1_g = zero(s.ln1_g);
    L.ln1_b = zero(s.ln1_b);
    L.wq = zero(s.wq);
    L.wk = zero(s.wk);
    L.wv = zero(s.wv);
    L.wo = zero(s.wo);
    L.ln2_g = zero(s.ln2_g);
    L.ln2_b = zero(s.ln2_b);
    L.w1 = zero(s.w1);
    L.b1 = zero(s.b1);
    L.w2 = zero(s.w2);
    L.b2 = zero(s.b2);
  }
  p.lnf_g = zero(src.lnf_g);
  p.lnf_b = zero(src.lnf_b);
  p.out_w = zero(src.out_w);
  return p;
}

namespace {

// Full cached forward. Input layout: position 0 holds the projected prefix,
// position 1 BOS, positions t+2 the tokens. Output row t reads the hidden
// state at position t+1 (the state that has seen tokens < t).
void forward_impl(const Vec& prefix, const std::vector<int>& tokens, const LMParams& p,
                  LMForwardCache& c) {
  const auto& cfg = p.cfg;
  const std::size_t d = cfg.d_model;
  const std::size_t n = tokens.size();
  const std::size_t T = n + 2;
  if (T > cfg.max_len) {
    throw UsageError("lm_forward: sequence length " + std::to_string(T) + " exceeds max " +
                     std::to_string(cfg.max_len));
  }
  if (prefix.size() != cfg.feature_dim) throw UsageError("lm_forward: prefix dim mismatch");
  for (int tok : tokens) {
    if (tok < 0 || tok >= static_cast<int>(cfg.vocab_size)) {
      throw UsageError("lm_forward: token id out of range: " + std::to_string(tok));
    }
  }

  c.T = T;
  c.tokens = tokens;
  c.prefix = prefix;
  c.x0.assign(T * d, 0.0);
  matvec(p.prefix_w, prefix.data(), c.x0.data(), d, cfg.feature_dim);
  for (std::size_t j = 0; j < d; ++j) c.x0[j] += p.pos_emb[j];
  for (std::size_t t = 1; t < T; ++t) {
    const int tok = t == 1 ? kBos : tokens[t - 2];
    for (std::size_t j = 0; j < d; ++j) {
      c.x0[t * d + j] = p.tok_emb[tok * d + j] + p.pos_emb[t * d + j];
    }
  }

  const std::size_t H = cfg.n_heads;
  const std::size_t dh = d / H;
  const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));

  c.layers.assign(cfg.n_layers, LayerCache{});
  Vec x = c.x0;
  for (std::size_t l = 0; l < cfg.n_layers; ++l) {
    auto& L = p.layers[l];
    auto& lc = c.layers[l];
    lc.x_in = x;
    layernorm(x, L.ln1_g, L.ln1_b, T, d, lc.xn1, lc.ln1);

    lc.q.resize(T * d);
    lc.k.resize(T * d);
    lc.v.resize(T * d);
    for (std::size_t t = 0; t < T; ++t) {
      matvec(L.wq, lc.xn1.data() + t * d, lc.q.data() + t * d, d, d);
      matvec(L.wk, lc.xn1.data() + t * d, lc.k.data() + t * d, d, d);
      matvec(L.wv, lc.xn1.data() + t * d, lc.v.data() + t * d, d, d);
    }

    lc.attn.assign(H * T * T, 0.0);
    lc.ctx.assign(T * d, 0.0);
    for (std::size_t h = 0; h < H; ++h) {
      for (std::size_t t = 0; t < T; ++t) {
        Vec scores(t + 1);
        for (std::size_t s = 0; s <= t; ++s) {
          double acc = 0.0;
          for (std::size_t j = 0; j < dh; ++j) {
            acc += lc.q[t * d + h * dh + j] * lc.k[s * d + h * dh + j];
          }
          scores[s] = acc * inv_sqrt_dh;
        }
        const Vec a = softmax(scores);
        for (std::size_t s = 0; s <= t; ++s) {
          lc.attn[(h * T + t) * T + s] = a[s];
          for (std::size_t j = 0; j < dh; ++j) {
            lc.ctx[t * d + h * dh + j] += a[s] * lc.v[s * d + h * dh + j];
          }
        }
      }
    }

    lc.x_mid.resize(T * d);
    for (std::size_t t = 0; t < T; ++t) {
      Vec o(d);
      matvec(L.wo, lc.ctx.data() + t * d, o.data(), d, d);
      for (std::size_t j = 0; j < d; ++j) lc.x_mid[t * d + j] = lc.x_in[t * d + j] + o[j];
    }

    layernorm(lc.x_mid, L.ln2_g, L.ln2_b, T, d, lc.xn2, lc.ln2);
    lc.h_pre.resize(T * cfg.d_ff);
    lc.h_act.resize(T * cfg.d_ff);
    x.resize(T * d);
    for (std::size_t t = 0; t < T; ++t) {
      matvec(L.w1, lc.xn2.data() + t * d, lc.h_pre.data() + t * cfg.d_ff, cfg.d_ff, d);
      for (std::size_t j = 0; j < cfg.d_ff; ++j) {
        lc.h_pre[t * cfg.d_ff + j] += L.b1[j];
        lc.h_act[t * cfg.d_ff + j] = gelu(lc.h_pre[t * cfg.d_ff + j]);
      }
      Vec f(d);
      matvec(L.w2, lc.h_act.data() + t * cfg.d_ff, f.data(), d, cfg.d_ff);
      for (std::size_t j = 0; j < d; ++j) x[t * d + j] = lc.x_mid[t * d + j] + f[j] + L.b2[j];
    }
  }

  c.x_last = x;
  layernorm(x, p.lnf_g, p.lnf_b, T, d, c.xf, c.lnf);

  c.probs.assign(n + 1, Vec());
  for (std::size_t r = 0; r <= n; ++r) {
    Vec logits(cfg.vocab_size);
    matvec(p.out_w, c.xf.data() + (r + 1) * d, logits.data(), cfg.vocab_size, d);
    c.probs[r] = softmax(logits);
  }
}

// Gradients of sum_r row_weight[r] * log p(target[r] | row r). Rows with
// weight 0 are skipped.
void backward_impl(const LMForwardCache& c, const LMParams& p, const std::vector<int>& targets,
                   const Vec& row_weights, LMGradients& acc) {
  const auto& cfg = p.cfg;
  const std::size_t d = cfg.d_model;
  const std::size_t T = c.T;
  const std::size_t H = cfg.n_heads;
  const std::size_t dh = d / H;
  const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));
  auto& g = acc.params;

  // Output head: dlogits = w * (onehot - probs).
  Vec d_xf(T * d, 0.0);
  for (std::size_t r = 0; r < targets.size(); ++r) {
    const double w = row_weights[r];
    if (w == 0.0) continue;
    const auto& pr = c.probs[r];
    Vec d_logits(cfg.vocab_size);
    for (std::size_t k = 0; k < cfg.vocab_size; ++k) d_logits[k] = -w * pr[k];
    d_logits[targets[r]] += w;
    matvec_backward(p.out_w, c.xf.data() + (r + 1) * d, d_logits.data(), d_xf.data() + (r + 1) * d,
                    g.out_w.data(), cfg.vocab_size, d);
  }

  Vec d_x(T * d, 0.0);
  layernorm_backward(d_xf, c.lnf, p.lnf_g, T, d, d_x, g.lnf_g, g.lnf_b);

  for (std::size_t li = cfg.n_layers; li-- > 0;) {
    const auto& L = p.layers[li];
    const auto& lc = c.layers[li];
    auto& gl = g.layers[li];

    // FFN block: x_out = x_mid + W2 gelu(W1 xn2 + b1) + b2
    Vec d_xmid = d_x;  // residual path
    Vec d_xn2(T * d, 0.0);
    for (std::size_t t = 0; t < T; ++t) {
      Vec d_hact(cfg.d_ff, 0.0);
      matvec_backward(L.w2, lc.h_act.data() + t * cfg.d_ff, d_x.data() + t * d, d_hact.data(),
                      gl.w2.data(), d, cfg.d_ff);
      for (std::size_t j = 0; j < d; ++j) gl.b2[j] += d_x[t * d + j];
      Vec d_hpre(cfg.d_ff);
      for (std::size_t j = 0; j < cfg.d_ff; ++j) {
        d_hpre[j] = d_hact[j] * gelu_grad(lc.h_pre[t * cfg.d_ff + j]);
        gl.b1[j] += d_hpre[j];
      }
      matvec_backward(L.w1, lc.xn2.data() + t * d, d_hpre.data(), d_xn2.data() + t * d,
                      gl.w1.data(), cfg.d_ff, d);
    }
    layernorm_backward(d_xn2, lc.ln2, L.ln2_g, T, d, d_xmid, gl.ln2_g, gl.ln2_b);

    // Attention block: x_mid = x_in + Wo ctx
    Vec d_xin = d_xmid;  // residual path
    Vec d_ctx(T * d, 0.0);
    for (std::size_t t = 0; t < T; ++t) {
      matvec_backward(L.wo, lc.ctx.data() + t * d, d_xmid.data() + t * d, d_ctx.data() + t * d,
                      gl.wo.data(), d, d);
    }

    Vec d_q(T * d, 0.0), d_k(T * d, 0.0), d_v(T * d, 0.0);
    for (std::size_t h = 0; h < H; ++h) {
      for (std::size_t t = 0; t < T; ++t) {
        Vec d_a(t + 1, 0.0);
        for (std::size_t s = 0; s <= t; ++s) {
          const double a = lc.attn[(h * T + t) * T + s];
          double acc2 = 0.0;
          for (std::size_t j = 0; j < dh; ++j) {
            d_v[s * d + h * dh + j] += a * d_ctx[t * d + h * dh + j];
            acc2 += d_ctx[t * d + h * dh + j] * lc.v[s * d + h * dh + j];
          }
          d_a[s] = acc2;
        }
        double inner = 0.0;
        for (std::size_t s = 0; s <= t; ++s) inner += lc.attn[(h * T + t) * T + s] * d_a[s];
        for (std::size_t s = 0; s <= t; ++s) {
          const double d_score = lc.attn[(h * T + t) * T + s] * (d_a[s] - inner) * inv_sqrt_dh;
          for (std::size_t j = 0; j < dh; ++j) {
            d_q[t * d + h * dh + j] += d_score * lc.k[s * d + h * dh + j];
            d_k[s * d + h * dh + j] += d_score * lc.q[t * d + h * dh + j];
          }
        }
      }
    }

    Vec d_xn1(T * d, 0.0);
    for (std::size_t t = 0; t < T; ++t) {
      matvec_backward(L.wq, lc.xn1.data() + t * d, d_q.data() + t * d, d_xn1.data() + t * d,
                      gl.wq.data(), d, d);
      matvec_backward(L.wk, lc.xn1.data() + t * d, d_k.data() + t * d, d_xn1.data() + t * d,
                      gl.wk.data(), d, d);
      matvec_backward(L.wv, lc.xn1.data() + t * d, d_v.data() + t * d, d_xn1.data() + t * d,
                      gl.wv.data(), d, d);
    }
    layernorm_backward(d_xn1, lc.ln1, L.ln1_g, T, d, d_xin, gl.ln1_g, gl.ln1_b);
    d_x = std::move(d_xin);
  }

  // Embedding layer.
  for (std::size_t t = 1; t < T; ++t) {
    const int tok = t == 1 ? kBos : c.tokens[t - 2];
    for (std::size_t j = 0; j < d; ++j) {
      g.tok_emb[tok * d + j] += d_x[t * d + j];
      g.pos_emb[t * d + j] += d_x[t * d + j];
    }
  }
  for (std::size_t j = 0; j < d; ++j) g.pos_emb[j] += d_x[j];
  matvec_backward(p.prefix_w, c.prefix.data(), d_x.data(), acc.d_prefix.data(), g.prefix_w.data(),
                  d, cfg.feature_dim);
}

}  // namespace

std::vector<Vec> lm_forward(const Vec& prefix, const std::vector<int>& tokens,
                            const LMParams& params, LMForwardCache* cache) {
  LMForwardCache local;
  LMForwardCache& c = cache ? *cache : local;
  forward_impl(prefix, tokens, params, c);
  std::vector<Vec> rows(c.probs.size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    rows[r].resize(c.probs[r].size());
    for (std::size_t k = 0; k < rows[r].size(); ++k) rows[r][k] = std::log(c.probs[r][k]);
  }
  return rows;
}

double sequence_logprob(const Vec& prefix, const std::vector<int>& tokens,
                        const LMParams& params) {
  if (tokens.empty()) throw UsageError("sequence_logprob: empty token sequence");
  LMForwardCache c;
  forward_impl(prefix, tokens, params, c);
  double lp = 0.0;
  for (std::size_t t = 0; t < tokens.size(); ++t) lp += std::log(c.probs[t][tokens[t]]);
  return lp;
}

SftResult sft_loss(const Vec& prefix, const std::vector<int>& tokens, const LMParams& params) {
  if (tokens.empty()) throw UsageError("sft_loss: empty token sequence");
  LMForwardCache c;
  forward_impl(prefix, tokens, params, c);
  const std::size_t n = tokens.size();

  SftResult out;
  for (std::size_t t = 0; t < n; ++t) out.loss -= std::log(c.probs[t][tokens[t]]);
  out.loss /= static_cast<double>(n);

  out.grads.params = LMParams::zeros_like(params);
  out.grads.d_prefix.assign(params.cfg.feature_dim, 0.0);
  Vec weights(n, -1.0 / static_cast<double>(n));  // d(mean NLL) = -d(sum logp)/n
  backward_impl(c, params, tokens, weights, out.grads);
  return out;
}

double sft_loss_accumulate(const Vec& prefix, const std::vector<int>& tokens,
                           const LMParams& params, LMGradients& acc) {
  if (tokens.empty()) throw UsageError("sft_loss_accumulate: empty token sequence");
  LMForwardCache c;
  forward_impl(prefix, tokens, params, c);
  const std::size_t n = tokens.size();

  double loss = 0.0;
  for (std::size_t t = 0; t < n; ++t) loss -= std::log(c.probs[t][tokens[t]]);
  loss /= static_cast<double>(n);

  acc.d_prefix.assign(params.cfg.feature_dim, 0.0);
  Vec weights(n, -1.0 / static_cast<double>(n));
  backward_impl(c, params, tokens, weights, acc);
  return loss;
}

void sequence_logprob_backward(const Vec& prefix, const std::vector<int>& tokens,
                               const LMParams& params, double weight, LMGradients& acc) {
  if (tokens.empty()) throw UsageError("sequence_logprob_backward: empty token sequence");
  LMForwardCache c;
  forward_impl(prefix, tokens, params, c);
  Vec weights(tokens.size(), weight);
  backward_impl(c, params, tokens, weights, acc);
}

std::vector<int> sample_generate(const Vec& prefix, const LMParams& params, Rng& rng,
                                 const DecodeConfig& cfg) {
  if (cfg.max_len < 1) throw UsageError("sample_generate: max_len must be >= 1");
  if (cfg.temperature < 0.0) throw UsageError("sample_generate: temperature must be >= 0");

  std::vector<int> tokens;
  while (tokens.size() < cfg.max_len) {
    LMForwardCache c;
    forward_impl(prefix, tokens, params, c);
    const Vec& pr = c.probs.back();

    int next;
    if (cfg.temperature == 0.0) {
      next = static_cast<int>(std::max_element(pr.begin(), pr.end()) - pr.begin());
    } else {
      Vec logits(pr.size());
      for (std::size_t k = 0; k < pr.size(); ++k) logits[k] = std::log(pr[k]) / cfg.temperature;
      const Vec scaled = softmax(logits);
      const double u = rng.uniform();
      double cum = 0.0;
      next = static_cast<int>(scaled.size()) - 1;
      for (std::size_t k = 0; k < scaled.size(); ++k) {
        cum += scaled[k];
        if (u < cum) {
          next = static_cast<int>(k);
          break;
        }
      }
    }
    if (next == kEos) break;
    tokens.push_back(next);
  }
  return tokens;
}

double grad_global_norm(const LMParams& grads) {
  double sq = 0.0;
  visit_param_blocks(const_cast<LMParams&>(grads), [&](const std::string&, Vec& v) {
    for (double x : v) sq += x * x;
  });
  return std::sqrt(sq);
}

void apply_sgd_step(LMParams& params, const LMParams& grads, double lr, double clip_norm) {
  double scale = lr;
  if (clip_norm > 0.0) {
    const double n = grad_global_norm(grads);
    if (n > clip_norm) scale = lr * clip_norm / n;
  }
  auto& g = const_cast<LMParams&>(grads);
  std::vector<Vec*> dst, src;
  visit_param_blocks(params, [&](const std::string&, Vec& v) { dst.push_back(&v); });
  visit_param_blocks(g, [&](const std::string&, Vec& v) { src.push_back(&v); });
  for (std::size_t b = 0; b < dst.size(); ++b) {
    for (std::size_t i = 0; i < dst[b]->size(); ++i) (*dst[b])[i] -= scale * (*src[b])[i];
  }
}

}  // namespace flexmuse
