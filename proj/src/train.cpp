#include <cmath>
#include <numeric>
#include <sstream>

#include "rsn/common.hpp"
#include "rsn/model.hpp"
#include "transformer_kernels.hpp"

namespace rsn {

namespace {

// Flat views over every tensor of a Params<T>, in visit order.
template <class T>
std::vector<std::pair<T*, Eigen::Index>> flat(Params<T>& p) {
  std::vector<std::pair<T*, Eigen::Index>> v;
  p.visit([&](std::string_view, T* d, Eigen::Index n) { v.emplace_back(d, n); });
  return v;
}

std::string describe_divergence(std::size_t step, double loss) {
  std::ostringstream s;
  s << "training diverged at step " << step << " (loss " << loss << ")";
  return s.str();
}

}  // namespace

TrainingDiverged::TrainingDiverged(std::size_t step, double loss)
    : std::runtime_error(describe_divergence(step, loss)), step_(step) {}

void train_in_place(TinyLM& model, const std::vector<std::vector<TokenId>>& corpus,
                    const TrainConfig& tc, std::uint64_t seed, TrainReport* report,
                    const std::function<void(std::size_t, double)>& on_log) {
  const ModelConfig& cfg = model.config();
  if (tc.steps == 0) {
    if (report) *report = TrainReport{};
    return;
  }
  if (corpus.empty()) throw ValidationError("empty training corpus");
  if (tc.batch_size == 0) throw ValidationError("batch_size must be positive");
  for (const auto& s : corpus) {
    if (s.size() < 2) throw ValidationError("training sequence shorter than 2 tokens");
    if (s.size() > cfg.max_seq_len) throw ValidationError("training sequence exceeds max_seq_len");
    for (auto t : s)
      if (t < 0 || static_cast<std::uint32_t>(t) >= cfg.vocab_size)
        throw ValidationError("corpus token outside model vocabulary");
  }

  Params<float>& params = model.params();
  Params<float> grad = Params<float>::zeros(cfg);
  Params<float> m1 = Params<float>::zeros(cfg);
  Params<float> m2 = Params<float>::zeros(cfg);
  auto pv = flat(params);
  auto gv = flat(grad);
  auto m1v = flat(m1);
  auto m2v = flat(m2);
  // Weight decay applies to 2-D projection matrices only.
  std::vector<bool> decay;
  params.visit([&](std::string_view name, float*, Eigen::Index) {
    decay.push_back(!name.ends_with("norm") && name != "tok_emb" && name != "pos_emb");
  });

  Rng rng(seed);
  std::vector<std::size_t> order(corpus.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng.shuffle(order);
  std::size_t cursor = 0;

  TrainReport rep;
  double running = 0.0;
  std::size_t running_n = 0;
  for (std::size_t step = 1; step <= tc.steps; ++step) {
    detail::Packed batch;
    std::vector<TokenId> targets;
    for (std::size_t i = 0; i < tc.batch_size; ++i) {
      if (cursor == order.size()) {
        rng.shuffle(order);
        cursor = 0;
      }
      const auto& s = corpus[order[cursor++]];
      batch.add(s);
      for (std::size_t t = 0; t + 1 < s.size(); ++t) targets.push_back(s[t + 1]);
      targets.push_back(-1);
    }

    grad.visit([](std::string_view, float* d, Eigen::Index n) { std::fill(d, d + n, 0.0f); });
    const float loss = detail::loss_and_backward<float>(params, cfg, batch, targets, &grad);
    if (!std::isfinite(loss)) throw TrainingDiverged(step, loss);

    double sq = 0.0;
    for (auto [d, n] : gv)
      for (Eigen::Index i = 0; i < n; ++i) sq += static_cast<double>(d[i]) * d[i];
    const double norm = std::sqrt(sq);
    if (!std::isfinite(norm)) throw TrainingDiverged(step, norm);
    const float clip = (tc.grad_clip > 0 && norm > tc.grad_clip)
                           ? static_cast<float>(tc.grad_clip / norm)
                           : 1.0f;

    double lr;
    if (step <= tc.warmup) {
      lr = tc.lr * static_cast<double>(step) / static_cast<double>(tc.warmup);
    } else {
      const double progress = static_cast<double>(step - tc.warmup) /
                              static_cast<double>(std::max<std::size_t>(1, tc.steps - tc.warmup));
      const double cosine = 0.5 * (1.0 + std::cos(M_PI * progress));
      lr = tc.lr * (tc.min_lr_ratio + (1.0 - tc.min_lr_ratio) * cosine);
    }
    const double bc1 = 1.0 - std::pow(tc.beta1, static_cast<double>(step));
    const double bc2 = 1.0 - std::pow(tc.beta2, static_cast<double>(step));
    const float b1 = static_cast<float>(tc.beta1), b2 = static_cast<float>(tc.beta2);
    const float step_size = static_cast<float>(lr / bc1);
    const float inv_bc2 = static_cast<float>(1.0 / bc2);
    const float eps = static_cast<float>(tc.eps);
    const float wd = static_cast<float>(lr * tc.weight_decay);
    for (std::size_t t = 0; t < pv.size(); ++t) {
      float* p = pv[t].first;
      const float* g = gv[t].first;
      float* a = m1v[t].first;
      float* v = m2v[t].first;
      const bool dec = decay[t] && wd > 0.0f;
      for (Eigen::Index i = 0; i < pv[t].second; ++i) {
        const float gi = g[i] * clip;
        a[i] = b1 * a[i] + (1.0f - b1) * gi;
        v[i] = b2 * v[i] + (1.0f - b2) * gi * gi;
        if (dec) p[i] -= wd * p[i];
        p[i] -= step_size * a[i] / (std::sqrt(v[i] * inv_bc2) + eps);
      }
    }

    running += loss;
    ++running_n;
    if ((tc.log_every && step % tc.log_every == 0) || step == tc.steps) {
      const double mean = running / static_cast<double>(running_n);
      rep.loss_curve.emplace_back(step, mean);
      if (on_log) on_log(step, mean);
      running = 0.0;
      running_n = 0;
    }
    rep.final_loss = loss;
    rep.steps = step;
  }
  if (report) *report = std::move(rep);
}

TinyLM train(const std::vector<std::vector<TokenId>>& corpus, const ModelConfig& config,
             const TrainConfig& tc, std::uint64_t seed, TrainReport* report,
             const std::function<void(std::size_t, double)>& on_log) {
  TinyLM model = TinyLM::initialize(config, derive_seed(seed, "init"));
  train_in_place(model, corpus, tc, derive_seed(seed, "batches"), report, on_log);
  return model;
}

ModelConfig random_tiny_config(std::uint64_t seed) {
  Rng rng(seed);
  ModelConfig c;
  c.n_layers = 1 + static_cast<std::uint32_t>(rng.uniform(2));
  c.n_heads = 1 + static_cast<std::uint32_t>(rng.uniform(2));
  c.d_model = c.n_heads * (4 + 2 * static_cast<std::uint32_t>(rng.uniform(3)));
  c.d_ff = 8 + 4 * static_cast<std::uint32_t>(rng.uniform(4));
  c.vocab_size = 7 + static_cast<std::uint32_t>(rng.uniform(6));
  c.max_seq_len = 8;
  return c;
}

GradientCheckResult gradient_check(const ModelConfig& config, std::uint64_t seed,
                                   const GradientCheckOptions& opt) {
  using W = long double;
  config.validate();
  if (config.n_layers > 2 || config.d_model > 32)
    throw ValidationError("gradient_check is meant for tiny configs (<= 2 layers, d_model <= 32)");
  if (opt.seq_len > config.max_seq_len) throw ValidationError("seq_len exceeds max_seq_len");

  Rng rng(seed);
  Params<W> p;
  if (opt.zero_weights) {
    p = Params<W>::zeros(config);
  } else {
    // Larger-than-training scale so every nonlinearity is exercised.
    p = Params<W>::zeros(config);
    p.visit([&](std::string_view, W* d, Eigen::Index n) {
      for (Eigen::Index i = 0; i < n; ++i) d[i] = static_cast<W>(rng.normal() * 0.5);
    });
  }

  detail::Packed batch;
  std::vector<TokenId> targets;
  for (std::size_t s = 0; s < opt.n_sequences; ++s) {
    std::vector<TokenId> seq;
    const std::size_t len = opt.seq_len - (s % 2);
    for (std::size_t t = 0; t < len; ++t)
      seq.push_back(static_cast<TokenId>(rng.uniform(config.vocab_size)));
    batch.add(seq);
    for (std::size_t t = 0; t < len; ++t)
      targets.push_back(t + 1 < len ? seq[t + 1] : static_cast<TokenId>(-1));
  }
  if (opt.zero_weights)
    for (auto& t : targets)
      if (t >= 0) t = 0;

  Params<W> grad = Params<W>::zeros(config);
  detail::loss_and_backward<W>(p, config, batch, targets, &grad);

  std::vector<std::string> names;
  p.visit([&](std::string_view name, W*, Eigen::Index) { names.emplace_back(name); });
  auto pv = flat(p);
  auto gv = flat(grad);
  const W h = static_cast<W>(opt.step);
  auto loss_at = [&]() { return detail::loss_and_backward<W>(p, config, batch, targets, nullptr); };

  GradientCheckResult res;
  for (std::size_t t = 0; t < pv.size(); ++t) {
    for (Eigen::Index i = 0; i < pv[t].second; ++i) {
      W& x = pv[t].first[i];
      const W x0 = x;
      x = x0 + h;
      const W f1 = loss_at();
      x = x0 - h;
      const W fm1 = loss_at();
      x = x0 + 2 * h;
      const W f2 = loss_at();
      x = x0 - 2 * h;
      const W fm2 = loss_at();
      x = x0;
      const W numeric = (8 * (f1 - fm1) - (f2 - fm2)) / (12 * h);
      const W analytic = gv[t].first[i];
      const W denom = std::max({std::fabs(analytic), std::fabs(numeric), static_cast<W>(opt.floor)});
      const double rel = static_cast<double>(std::fabs(analytic - numeric) / denom);
      if (!std::isfinite(rel) || rel > res.max_relative_error) {
        res.max_relative_error = std::isfinite(rel) ? rel : INFINITY;
        res.worst_tensor = names[t];
      }
      ++res.n_parameters;
    }
  }
  return res;
}

}  // namespace rsn
