#pragma once

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "augu/errors.hpp"
#include "augu/glancing.hpp"
#include "augu/losses.hpp"
#include "augu/model.hpp"
#include "augu/optimizer.hpp"

namespace augu {

struct TrainingPair {
  ContextBundle bundle;
  TokenSegment keyword;  // bare keyword tokens, no marker or padding
  MatchType match_type = MatchType::exact;
};

struct LossWeights {
  double lambda = 1.0;
};

/// Loss is aborted on a non-finite value; the message lists the batch.
struct NumericAbort : NumericError {
  using NumericError::NumericError;
};

template <class T>
struct CombinedLoss {
  Var<T> total;
  Var<T> nlg_sum;
  Var<T> dr;
};

/// (1/|B|) * (sum of per-pair NLL + lambda * InfoNCE). Keyword embeddings
/// come from the same model with the keyword as a context-free query.
template <class T>
CombinedLoss<T> combined_loss(std::span<const TrainingPair> batch, Binding<T>& net, const LossWeights& w) {
  if (batch.empty()) throw ContractError("combined_loss on an empty batch");
  if (w.lambda < 0) throw ContractError("lambda must be >= 0");
  std::vector<Var<T>> nlg, qemb, kemb;
  for (const auto& pair : batch) {
    auto r = net.forward(pair.bundle);
    nlg.push_back(nlg_loss(r.logits, std::span<const std::int32_t>(pair.keyword.ids)));
    qemb.push_back(r.embedding);
    ContextBundle kb;
    kb.query = as_query_segment(pair.keyword.ids, net.config());
    auto enc = net.encode_bundle(kb);
    kemb.push_back(net.dense_embed(net.decode(kb.query, enc.fused, enc.fused_pad)));
  }
  CombinedLoss<T> out;
  out.nlg_sum = sum(concat_rows(std::span<const Var<T>>(nlg)));
  out.dr = contrastive_loss(concat_rows(std::span<const Var<T>>(qemb)), concat_rows(std::span<const Var<T>>(kemb)));
  out.total = scale(add(out.nlg_sum, scale(out.dr, static_cast<T>(w.lambda))), T{1} / static_cast<T>(batch.size()));
  return out;
}

struct TrainConfig {
  std::string profile = "desk";
  int epochs = 10;
  int batch_size = 64;
  double lr = 3e-4;
  int warmup_steps = 100;
  double lambda = 1.0;
  GlanceSchedule glance;
  std::uint64_t seed = 1;

  static TrainConfig desk() { return {}; }
  static TrainConfig paper() {
    TrainConfig c;
    c.profile = "paper";
    c.batch_size = 16384;
    c.lr = 5e-5;
    c.warmup_steps = 1000;
    return c;
  }

  void set(const std::string& key, const std::string& value) {
    auto num = [&](auto& dst) {
      using V = std::decay_t<decltype(dst)>;
      try {
        std::size_t used = 0;
        if constexpr (std::is_floating_point_v<V>) {
          dst = static_cast<V>(std::stod(value, &used));
        } else {
          dst = static_cast<V>(std::stoll(value, &used));
        }
        if (used != value.size()) throw std::invalid_argument(value);
      } catch (const std::exception&) {
        throw ConfigError("bad value for " + key + ": '" + value + "'");
      }
    };
    if (key == "profile") {
      if (value != "desk" && value != "paper") throw ConfigError("unknown profile '" + value + "'");
      profile = value;
    } else if (key == "epochs") num(epochs);
    else if (key == "batch_size") num(batch_size);
    else if (key == "lr") num(lr);
    else if (key == "warmup_steps") num(warmup_steps);
    else if (key == "lambda") num(lambda);
    else if (key == "d_rand") num(glance.max_rates.d_rand);
    else if (key == "d_web") num(glance.max_rates.d_web);
    else if (key == "d_qp") num(glance.max_rates.d_qp);
    else if (key == "d_all") num(glance.max_rates.d_all);
    else if (key == "warmup_epochs") num(glance.warmup_epochs);
    else if (key == "seed") num(seed);
    else throw ConfigError("unknown training config key '" + key + "'");
  }

  /// Parses key=value lines; '#' starts a comment.
  static TrainConfig parse(const std::string& text) { return parse(text, TrainConfig{}); }
  static TrainConfig parse(const std::string& text, TrainConfig base) {
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (auto h = line.find('#'); h != std::string::npos) line.erase(h);
      auto trim = [](std::string s) {
        const auto b = s.find_first_not_of(" \t\r");
        const auto e = s.find_last_not_of(" \t\r");
        return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
      };
      line = trim(line);
      if (line.empty()) continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos) throw ConfigError("line " + std::to_string(lineno) + ": expected key=value");
      base.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    base.finalize();
    return base;
  }

  void finalize() {
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (lr <= 0) throw ConfigError("lr must be > 0");
    if (lambda < 0) throw ConfigError("lambda must be >= 0");
    glance.total_epochs = epochs;
    glance.validate();
  }

  std::string to_text() const {
    std::ostringstream os;
    os.precision(17);
    os << "profile=" << profile << "\nepochs=" << epochs << "\nbatch_size=" << batch_size << "\nlr=" << lr
       << "\nwarmup_steps=" << warmup_steps << "\nlambda=" << lambda << "\nd_rand=" << glance.max_rates.d_rand
       << "\nd_web=" << glance.max_rates.d_web << "\nd_qp=" << glance.max_rates.d_qp
       << "\nd_all=" << glance.max_rates.d_all << "\nwarmup_epochs=" << glance.warmup_epochs << "\nseed=" << seed
       << "\n";
    return os.str();
  }
};

struct EpochStats {
  int epoch = 0;
  double nlg_loss = 0;  // mean per pair
  double dr_loss = 0;   // mean per pair
  GlanceRates rates;    // at the last step of the epoch
  double lr = 0;        // at the last step of the epoch

  static std::string csv_header() { return "epoch,nlg_loss,dr_loss,d_rand,d_web,d_qp,d_all,lr"; }
  std::string csv_row() const {
    std::ostringstream os;
    os.precision(9);
    os << epoch << ',' << nlg_loss << ',' << dr_loss << ',' << rates.d_rand << ',' << rates.d_web << ','
       << rates.d_qp << ',' << rates.d_all << ',' << lr;
    return os.str();
  }
};

inline std::int64_t steps_per_epoch(std::size_t dataset_size, int batch_size) {
  return static_cast<std::int64_t>((dataset_size + static_cast<std::size_t>(batch_size) - 1) /
                                   static_cast<std::size_t>(batch_size));
}

/// One pass over a shuffled copy of the dataset. Glancing rates follow the
/// fractional epoch of each optimizer step.
inline EpochStats train_epoch(UnityModel<float>& model, std::span<const TrainingPair> dataset,
                              const GlanceSchedule& schedule, OptimizerState& opt, Rng& rng, int epoch_index,
                              int batch_size, const LossWeights& weights) {
  if (dataset.empty()) throw ContractError("train_epoch on an empty dataset");
  const auto spe = steps_per_epoch(dataset.size(), batch_size);
  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), 0);
  shuffle(order.begin(), order.end(), rng);

  EpochStats stats;
  stats.epoch = epoch_index + 1;
  double nlg_total = 0, dr_total = 0;
  std::vector<TrainingPair> batch;
  for (std::int64_t s = 0; s < spe; ++s) {
    const std::size_t lo = static_cast<std::size_t>(s) * static_cast<std::size_t>(batch_size);
    const std::size_t hi = std::min(dataset.size(), lo + static_cast<std::size_t>(batch_size));
    const double epoch = epoch_index + static_cast<double>(s) / static_cast<double>(spe);
    const GlanceRates rates = glance_rates(schedule, epoch);
    batch.clear();
    for (std::size_t i = lo; i < hi; ++i) {
      const auto& src = dataset[order[i]];
      batch.push_back({apply_glancing(src.bundle, rates, rng).bundle, src.keyword, src.match_type});
    }
    auto abort = [&](const std::string& why) {
      std::ostringstream os;
      os << "numeric abort at epoch " << stats.epoch << " step " << s << ": " << why << "; batch pair ids:";
      for (std::size_t i = lo; i < hi; ++i) os << ' ' << order[i];
      return NumericAbort(os.str());
    };
    model.zero_grad();
    Graph<float> g;
    auto net = model.bind(g);
    std::optional<CombinedLoss<float>> loss;
    try {
      loss = combined_loss<float>(batch, net, weights);
    } catch (const NumericError& e) {
      throw abort(e.what());
    }
    const double nlg = loss->nlg_sum.value().item(), dr = loss->dr.value().item();
    if (!std::isfinite(loss->total.value().item())) {
      throw abort("non-finite loss (nlg=" + std::to_string(nlg) + ", dr=" + std::to_string(dr) + ")");
    }
    g.backward(loss->total);
    stats.lr = adam_step(model.parameters(), opt);
    nlg_total += nlg;
    dr_total += dr;
    stats.rates = rates;
  }
  stats.nlg_loss = nlg_total / static_cast<double>(dataset.size());
  stats.dr_loss = dr_total / static_cast<double>(dataset.size());
  return stats;
}

/// Full training run per TrainConfig; `on_epoch` sees each epoch's stats.
inline std::vector<EpochStats> train(UnityModel<float>& model, std::span<const TrainingPair> dataset,
                                     const TrainConfig& cfg,
                                     const std::function<void(const EpochStats&)>& on_epoch = {}) {
  OptimizerState opt;
  opt.lr_base = cfg.lr;
  opt.warmup_steps = cfg.warmup_steps;
  opt.total_steps = steps_per_epoch(dataset.size(), cfg.batch_size) * cfg.epochs;
  GlanceSchedule schedule = cfg.glance;
  schedule.total_epochs = cfg.epochs;
  Rng rng(cfg.seed ^ 0x747261696eULL);
  std::vector<EpochStats> out;
  for (int e = 0; e < cfg.epochs; ++e) {
    out.push_back(train_epoch(model, dataset, schedule, opt, rng, e, cfg.batch_size, {cfg.lambda}));
    if (on_epoch) on_epoch(out.back());
  }
  return out;
}

}  // namespace augu
