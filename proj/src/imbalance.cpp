#include "sits/imbalance.hpp"

#include <algorithm>
#include <numeric>

#include "sits/kernels.hpp"

namespace sits::imbalance {

std::string to_string(Method m) {
  switch (m) {
    case Method::kNone: return "none";
    case Method::kClassWeight: return "class-weight";
    case Method::kSmote: return "smote";
    case Method::kAdasyn: return "adasyn";
    case Method::kUndersample: return "undersample";
  }
  return "?";
}

std::optional<Method> method_from_string(const std::string& s) {
  if (s == "none") return Method::kNone;
  if (s == "class-weight") return Method::kClassWeight;
  if (s == "smote") return Method::kSmote;
  if (s == "adasyn") return Method::kAdasyn;
  if (s == "undersample") return Method::kUndersample;
  return std::nullopt;
}

void ResampleConfig::validate() const {
  require(k_neighbors >= 1, "k_neighbors must be >= 1");
  require(undersample_plots >= 1, "undersample target must be >= 1");
}

std::vector<double> compute_class_weights(std::span<const int> labels, int n_classes,
                                          std::vector<int>* absent) {
  require(n_classes >= 1, "need at least one class");
  std::vector<std::size_t> counts(static_cast<std::size_t>(n_classes), 0);
  for (int l : labels) {
    require(l >= 0 && l < n_classes, "label out of range");
    counts[static_cast<std::size_t>(l)] += 1;
  }
  const double n = static_cast<double>(labels.size());
  std::vector<double> w(static_cast<std::size_t>(n_classes), 0.0);
  for (std::size_t k = 0; k < w.size(); ++k) {
    if (counts[k] == 0) {
      if (absent) absent->push_back(static_cast<int>(k));
      continue;
    }
    w[k] = n / (static_cast<double>(n_classes) * static_cast<double>(counts[k]));
  }
  return w;
}

namespace {

std::vector<std::vector<std::size_t>> rows_by_class(const FeatureMatrix& m, int n_classes) {
  std::vector<std::vector<std::size_t>> out(static_cast<std::size_t>(n_classes));
  for (std::size_t i = 0; i < m.n_rows(); ++i) {
    require(m.labels[i] >= 0 && m.labels[i] < n_classes, "label out of range");
    out[static_cast<std::size_t>(m.labels[i])].push_back(i);
  }
  return out;
}

std::size_t majority_class(const std::vector<std::vector<std::size_t>>& by_class) {
  std::size_t best = 0;
  for (std::size_t c = 1; c < by_class.size(); ++c)
    if (by_class[c].size() > by_class[best].size()) best = c;
  return best;
}

// k nearest rows of `candidates` to row `query` by Euclidean distance,
// excluding the query itself; ties resolve to the lower row index.
std::vector<std::size_t> knn_of(const FeatureMatrix& m, std::size_t query,
                                std::span<const std::size_t> candidates, std::size_t k) {
  std::vector<std::pair<double, std::size_t>> dist;
  dist.reserve(candidates.size());
  for (std::size_t c : candidates) {
    if (c == query) continue;
    dist.emplace_back(kernels::sqdist(m.row(query), m.row(c), m.n_cols()), c);
  }
  const std::size_t take = std::min(k, dist.size());
  std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(take), dist.end());
  std::vector<std::size_t> out(take);
  for (std::size_t i = 0; i < take; ++i) out[i] = dist[i].second;
  return out;
}

void append_interpolated(FeatureMatrix& out, const FeatureMatrix& m, std::size_t i,
                         std::size_t nn, double u, int label, std::int64_t pixel_id) {
  const std::size_t base = out.values.size();
  out.values.resize(base + m.n_cols());
  const double* a = m.row(i);
  const double* b = m.row(nn);
  for (std::size_t j = 0; j < m.n_cols(); ++j) out.values[base + j] = a[j] + u * (b[j] - a[j]);
  out.pixel_ids.push_back(pixel_id);
  out.plot_ids.push_back(kSyntheticPlotId);
  out.labels.push_back(label);
}

// Shared generation loop: `allocation[j]` synthetic points seeded from the
// j-th member of the class. SMOTE passes a uniform draw over members instead.
void generate_class(FeatureMatrix& out, const FeatureMatrix& m,
                    std::span<const std::size_t> members,
                    const std::vector<std::vector<std::size_t>>& neighbors,
                    std::span<const std::size_t> allocation, Rng& rng,
                    std::int64_t& next_synth_id, int label) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (std::size_t j = 0; j < members.size(); ++j) {
    for (std::size_t s = 0; s < allocation[j]; ++s) {
      const auto& nns = neighbors[j];
      std::uniform_int_distribution<std::size_t> pick(0, nns.size() - 1);
      const std::size_t nn = nns[pick(rng)];
      const double u = unit(rng);
      append_interpolated(out, m, members[j], nn, u, label, next_synth_id--);
    }
  }
}

}  // namespace

ResampleResult smote(const FeatureMatrix& m, int n_classes, int k, std::uint64_t seed) {
  require(k >= 1, "k must be >= 1");
  ResampleResult res;
  res.data = m;
  auto by_class = rows_by_class(m, n_classes);
  const std::size_t majority_count = by_class[majority_class(by_class)].size();
  std::int64_t next_synth_id = -1;

  for (std::size_t c = 0; c < by_class.size(); ++c) {
    const auto& members = by_class[c];
    if (members.empty() || members.size() >= majority_count) continue;
    if (members.size() == 1)
      throw std::invalid_argument("class " + std::to_string(c) +
                                  " has a single sample; SMOTE needs at least 2");
    std::size_t kc = static_cast<std::size_t>(k);
    if (kc > members.size() - 1) {
      kc = members.size() - 1;
      res.warnings.push_back("class " + std::to_string(c) + ": k capped at " +
                             std::to_string(kc));
    }
    std::vector<std::vector<std::size_t>> neighbors(members.size());
    for (std::size_t j = 0; j < members.size(); ++j)
      neighbors[j] = knn_of(m, members[j], members, kc);

    const std::size_t need = majority_count - members.size();
    Rng rng(derive_seed(seed, 11, c));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::uniform_int_distribution<std::size_t> pick_member(0, members.size() - 1);
    for (std::size_t s = 0; s < need; ++s) {
      const std::size_t j = pick_member(rng);
      std::uniform_int_distribution<std::size_t> pick_nn(0, neighbors[j].size() - 1);
      const std::size_t nn = neighbors[j][pick_nn(rng)];
      const double u = unit(rng);
      append_interpolated(res.data, m, members[j], nn, u, static_cast<int>(c), next_synth_id--);
    }
  }
  return res;
}

ResampleResult adasyn(const FeatureMatrix& m, int n_classes, int k, std::uint64_t seed) {
  require(k >= 1, "k must be >= 1");
  ResampleResult res;
  res.data = m;
  auto by_class = rows_by_class(m, n_classes);
  const std::size_t maj = majority_class(by_class);
  const std::size_t majority_count = by_class[maj].size();
  std::int64_t next_synth_id = -1;

  std::vector<std::size_t> all_rows(m.n_rows());
  std::iota(all_rows.begin(), all_rows.end(), std::size_t{0});

  for (std::size_t c = 0; c < by_class.size(); ++c) {
    const auto& members = by_class[c];
    if (members.empty() || members.size() >= majority_count) continue;
    if (members.size() == 1)
      throw std::invalid_argument("class " + std::to_string(c) +
                                  " has a single sample; ADASYN needs at least 2");
    std::size_t kc = static_cast<std::size_t>(k);
    if (kc > members.size() - 1) {
      kc = members.size() - 1;
      res.warnings.push_back("class " + std::to_string(c) + ": k capped at " +
                             std::to_string(kc));
    }

    // Hardness: share of majority-class points among the k nearest
    // neighbours in the full training set (k uncapped here, it only caps the
    // same-class generation neighbourhood).
    std::vector<double> hardness(members.size(), 0.0);
    double hardness_total = 0.0;
    for (std::size_t j = 0; j < members.size(); ++j) {
      auto nn = knn_of(m, members[j], all_rows, static_cast<std::size_t>(k));
      std::size_t n_major = 0;
      for (std::size_t r : nn)
        if (static_cast<std::size_t>(m.labels[r]) == maj) ++n_major;
      hardness[j] = nn.empty() ? 0.0 : static_cast<double>(n_major) / static_cast<double>(nn.size());
      hardness_total += hardness[j];
    }

    const std::size_t need = majority_count - members.size();
    std::vector<std::size_t> allocation(members.size(), 0);
    if (hardness_total <= 0.0) {
      res.warnings.push_back("class " + std::to_string(c) +
                             ": no majority neighbours, falling back to uniform allocation");
      for (std::size_t s = 0; s < need; ++s) allocation[s % members.size()] += 1;
    } else {
      // largest-remainder rounding of need * hardness / total
      std::vector<std::pair<double, std::size_t>> remainder(members.size());
      std::size_t assigned = 0;
      for (std::size_t j = 0; j < members.size(); ++j) {
        const double quota = static_cast<double>(need) * hardness[j] / hardness_total;
        allocation[j] = static_cast<std::size_t>(quota);
        assigned += allocation[j];
        remainder[j] = {quota - static_cast<double>(allocation[j]), j};
      }
      std::sort(remainder.begin(), remainder.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
      });
      for (std::size_t r = 0; assigned < need; ++r, ++assigned)
        allocation[remainder[r % remainder.size()].second] += 1;
    }

    std::vector<std::vector<std::size_t>> neighbors(members.size());
    for (std::size_t j = 0; j < members.size(); ++j)
      neighbors[j] = knn_of(m, members[j], members, kc);

    Rng rng(derive_seed(seed, 12, c));
    generate_class(res.data, m, members, neighbors, allocation, rng, next_synth_id,
                   static_cast<int>(c));
    res.allocations.push_back({static_cast<int>(c), hardness, allocation});
  }
  return res;
}

FeatureMatrix undersample_majority(const FeatureMatrix& m, int n_classes, int target_plots,
                                   std::uint64_t seed) {
  require(target_plots >= 1, "target plot count must be >= 1");
  auto by_class = rows_by_class(m, n_classes);

  // plot counts per class, in first-appearance order
  std::vector<std::vector<std::int64_t>> plots(static_cast<std::size_t>(n_classes));
  for (std::size_t i = 0; i < m.n_rows(); ++i) {
    auto& list = plots[static_cast<std::size_t>(m.labels[i])];
    if (std::find(list.begin(), list.end(), m.plot_ids[i]) == list.end())
      list.push_back(m.plot_ids[i]);
  }
  std::size_t maj = 0;
  for (std::size_t c = 1; c < plots.size(); ++c)
    if (plots[c].size() > plots[maj].size()) maj = c;
  auto& majority_plots = plots[maj];
  require(static_cast<std::size_t>(target_plots) <= majority_plots.size(),
          "undersample target " + std::to_string(target_plots) + " exceeds the " +
              std::to_string(majority_plots.size()) + " majority plots");

  Rng rng(derive_seed(seed, 13));
  std::shuffle(majority_plots.begin(), majority_plots.end(), rng);
  std::vector<std::int64_t> kept(majority_plots.begin(),
                                 majority_plots.begin() + target_plots);
  std::sort(kept.begin(), kept.end());

  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < m.n_rows(); ++i) {
    if (static_cast<std::size_t>(m.labels[i]) != maj ||
        std::binary_search(kept.begin(), kept.end(), m.plot_ids[i]))
      rows.push_back(i);
  }
  return select_rows(m, rows);
}

AppliedResample apply(const FeatureMatrix& train, int n_classes, const ResampleConfig& cfg) {
  cfg.validate();
  AppliedResample out;
  out.class_weights.assign(static_cast<std::size_t>(n_classes), 1.0);
  switch (cfg.method) {
    case Method::kNone:
      out.data = train;
      break;
    case Method::kClassWeight: {
      out.data = train;
      std::vector<int> absent;
      out.class_weights = compute_class_weights(train.labels, n_classes, &absent);
      // classes absent from this slice keep a unit weight so the loss stays
      // defined if a stray sample appears downstream
      for (int c : absent) out.class_weights[static_cast<std::size_t>(c)] = 1.0;
      break;
    }
    case Method::kSmote: {
      auto res = smote(train, n_classes, cfg.k_neighbors, cfg.seed);
      out.data = std::move(res.data);
      out.warnings = std::move(res.warnings);
      break;
    }
    case Method::kAdasyn: {
      auto res = adasyn(train, n_classes, cfg.k_neighbors, cfg.seed);
      out.data = std::move(res.data);
      out.warnings = std::move(res.warnings);
      break;
    }
    case Method::kUndersample:
      out.data = undersample_majority(train, n_classes, cfg.undersample_plots, cfg.seed);
      break;
  }
  return out;
}

}  // namespace sits::imbalance
