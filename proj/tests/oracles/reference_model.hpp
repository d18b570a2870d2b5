#pragma once

// Straight-line double-precision evaluation of the reader, one instance at a
// time, reading raw parameter values by name. No graph, no batching, no
// padding: loops over plain vectors only.

#include <cmath>
#include <string>
#include <vector>

#include "knreader/model.hpp"

namespace oracle {

using Vec = std::vector<double>;

template <typename T>
struct RefParams {
  const knreader::autodiff::ParameterSet<T>& set;

  double at(const std::string& name, std::size_t r, std::size_t c) const {
    return static_cast<double>(set.at(name).value(r, c));
  }
  std::size_t hidden() const { return set.at("context.forward.hidden_candidate_weights").value.rows(); }
  Vec embed(knreader::WordId id) const {
    const auto& e = set.at("embedding").value;
    Vec v(e.cols());
    for (std::size_t c = 0; c < e.cols(); ++c) v[c] = static_cast<double>(e(static_cast<std::size_t>(id), c));
    return v;
  }
};

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline double dot(const Vec& a, const Vec& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline Vec softmax(const Vec& x) {
  double mx = x[0];
  for (double v : x) mx = std::max(mx, v);
  Vec out(x.size());
  double total = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) total += out[i] = std::exp(x[i] - mx);
  for (auto& v : out) v /= total;
  return out;
}

inline Vec concat(const Vec& a, const Vec& b) {
  Vec out(a);
  out.insert(out.end(), b.begin(), b.end());
  return out;
}

// z = sig(x Wz + h Uz + bz), r = sig(x Wr + h Ur + br),
// c = tanh(x Wc + (r*h) Uc + bc), h' = (1-z) h + z c
template <typename T>
Vec gru_step(const RefParams<T>& p, const std::string& prefix, const Vec& x, const Vec& h) {
  const std::size_t n = h.size();
  const std::string wx = prefix + ".input_weights", uzr = prefix + ".hidden_gate_weights",
                    uc = prefix + ".hidden_candidate_weights", b = prefix + ".bias";
  Vec z(n), r(n), out(n);
  for (std::size_t j = 0; j < n; ++j) {
    double az = p.at(b, 0, j), ar = p.at(b, 0, n + j);
    for (std::size_t i = 0; i < x.size(); ++i) {
      az += x[i] * p.at(wx, i, j);
      ar += x[i] * p.at(wx, i, n + j);
    }
    for (std::size_t i = 0; i < n; ++i) {
      az += h[i] * p.at(uzr, i, j);
      ar += h[i] * p.at(uzr, i, n + j);
    }
    z[j] = sigmoid(az);
    r[j] = sigmoid(ar);
  }
  for (std::size_t j = 0; j < n; ++j) {
    double ac = p.at(b, 0, 2 * n + j);
    for (std::size_t i = 0; i < x.size(); ++i) ac += x[i] * p.at(wx, i, 2 * n + j);
    for (std::size_t i = 0; i < n; ++i) ac += r[i] * h[i] * p.at(uc, i, j);
    out[j] = (1.0 - z[j]) * h[j] + z[j] * std::tanh(ac);
  }
  return out;
}

struct BiRun {
  std::vector<Vec> outputs;  // [fwd ; bwd] per position
  Vec final_forward, final_backward;
};

template <typename T>
BiRun run_bigru(const RefParams<T>& p, const std::string& prefix, const std::vector<knreader::WordId>& ids,
                const Vec& init_f, const Vec& init_b) {
  const std::size_t n = ids.size();
  std::vector<Vec> f(n), b(n);
  Vec h = init_f;
  for (std::size_t t = 0; t < n; ++t) f[t] = h = gru_step(p, prefix + ".forward", p.embed(ids[t]), h);
  BiRun run;
  run.final_forward = h;
  h = init_b;
  for (std::size_t t = n; t-- > 0;) b[t] = h = gru_step(p, prefix + ".backward", p.embed(ids[t]), h);
  run.final_backward = h;
  for (std::size_t t = 0; t < n; ++t) run.outputs.push_back(concat(f[t], b[t]));
  return run;
}

struct RefOutput {
  Vec scores;
  Vec probabilities;
  double loss = 0.0;
  std::vector<Vec> fact_attention;  // question row, then occurrence rows
};

template <typename T>
RefOutput reference_forward(const knreader::autodiff::ParameterSet<T>& set, const knreader::model::ModelConfig& cfg,
                            const knreader::model::PreparedInstance& inst) {
  using knreader::model::Interaction;
  const RefParams<T> p{set};
  const std::size_t h = p.hidden();
  const Vec zero(h, 0.0);
  const auto& e = inst.encoded;

  const BiRun doc = run_bigru(p, "context", e.document_ids, zero, zero);
  const BiRun q = run_bigru(p, "context", e.question_ids, zero, zero);

  std::vector<Vec> keys, values;
  const bool memory = cfg.builds_memory();
  if (memory) {
    for (const auto& f : inst.facts) {
      const BiRun s = run_bigru(p, "facts", f.subject_ids, zero, zero);
      const BiRun r = run_bigru(p, "facts", {f.relation_id}, s.final_forward, s.final_backward);
      const BiRun o = run_bigru(p, "facts", f.object_ids, r.final_forward, r.final_backward);
      const Vec subj = concat(s.final_forward, s.final_backward);
      const Vec obj = concat(o.final_forward, o.final_backward);
      keys.push_back(cfg.kv == knreader::model::KvStrategy::SubjObj ? subj : obj);
      values.push_back(obj);
    }
  }

  RefOutput out;
  auto enrich = [&](const Vec& ctx) {
    Vec kn(ctx.size(), 0.0);
    if (!keys.empty()) {
      Vec logits;
      for (const auto& k : keys) logits.push_back(dot(ctx, k));
      const Vec a = softmax(logits);
      out.fact_attention.push_back(a);
      for (std::size_t j = 0; j < values.size(); ++j) {
        for (std::size_t i = 0; i < kn.size(); ++i) kn[i] += a[j] * values[j][i];
      }
    }
    Vec mixed(ctx.size());
    for (std::size_t i = 0; i < ctx.size(); ++i) mixed[i] = cfg.gamma * ctx[i] + (1.0 - cfg.gamma) * kn[i];
    return mixed;
  };

  const Vec q_ctx = q.outputs[e.placeholder_index];
  const Vec q_kn = memory ? enrich(q_ctx) : Vec{};
  double w[4];
  for (std::size_t i = 0; i < 4; ++i) w[i] = p.at("ensemble.w" + std::to_string(i + 1), 0, 0);

  out.scores.assign(e.candidate_occurrences.size(), 0.0);
  for (std::size_t c = 0; c < e.candidate_occurrences.size(); ++c) {
    for (std::size_t pos : e.candidate_occurrences[c]) {
      const Vec& d_ctx = doc.outputs[pos];
      const Vec d_kn = memory ? enrich(d_ctx) : Vec{};
      for (Interaction i : knreader::model::kInteractions) {
        if (!cfg.interactions.enabled(i)) continue;
        const Vec& qv = (i == Interaction::KnCtx || i == Interaction::KnKn) ? q_kn : q_ctx;
        const Vec& dv = (i == Interaction::CtxKn || i == Interaction::KnKn) ? d_kn : d_ctx;
        out.scores[c] += w[static_cast<std::size_t>(i)] * dot(dv, qv);
      }
    }
  }
  out.probabilities = softmax(out.scores);
  out.loss = -std::log(out.probabilities[e.gold_index]);
  return out;
}

}  // namespace oracle
