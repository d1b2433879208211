#include "apex/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "apex/core.hpp"

namespace apex {

namespace {

struct Oriented {
  std::vector<double> id;
  std::vector<double> ood;
};

Oriented orient(const std::vector<double>& id, const std::vector<double>& ood, Orientation o) {
  if (id.empty() || ood.empty()) throw InputError("metrics need non-empty ID and OOD score sets");
  for (const auto* v : {&id, &ood}) {
    for (double s : *v) {
      if (std::isnan(s)) throw InputError("metrics: NaN score");
    }
  }
  Oriented out{id, ood};
  if (o == Orientation::kHigherIsId) {
    for (double& s : out.id) s = -s;
    for (double& s : out.ood) s = -s;
  }
  return out;
}

}  // namespace

const char* to_string(Orientation o) { return o == Orientation::kLowerIsId ? "lower-is-id" : "higher-is-id"; }

Orientation orientation_from_string(const std::string& s) {
  if (s == "lower-is-id") return Orientation::kLowerIsId;
  if (s == "higher-is-id") return Orientation::kHigherIsId;
  throw ConfigError("unknown orientation '" + s + "' (expected lower-is-id or higher-is-id)");
}

double auroc(const std::vector<double>& id_scores, const std::vector<double>& ood_scores, Orientation orientation) {
  const Oriented s = orient(id_scores, ood_scores, orientation);
  std::vector<double> id = s.id;
  std::sort(id.begin(), id.end());
  // For each OOD score count ID below (full credit) and equal (half credit).
  double wins = 0;
  for (double o : s.ood) {
    const auto lo = std::lower_bound(id.begin(), id.end(), o);
    const auto hi = std::upper_bound(lo, id.end(), o);
    wins += static_cast<double>(lo - id.begin()) + 0.5 * static_cast<double>(hi - lo);
  }
  return wins / (static_cast<double>(id.size()) * static_cast<double>(s.ood.size()));
}

double fpr_at_tpr(const std::vector<double>& id_scores, const std::vector<double>& ood_scores, Orientation orientation,
                  double tpr_target) {
  if (!(tpr_target > 0 && tpr_target <= 1)) throw ConfigError("tpr_target must be in (0, 1]");
  const Oriented s = orient(id_scores, ood_scores, orientation);
  std::vector<double> id = s.id;
  std::sort(id.begin(), id.end());
  const double n = static_cast<double>(id.size());
  auto k = static_cast<std::size_t>(std::ceil(tpr_target * n - 1e-9));
  k = std::clamp<std::size_t>(k, 1, id.size());
  const double threshold = id[k - 1];
  const auto admitted = std::count_if(s.ood.begin(), s.ood.end(), [&](double v) { return v <= threshold; });
  return static_cast<double>(admitted) / static_cast<double>(s.ood.size());
}

double aupr(const std::vector<double>& id_scores, const std::vector<double>& ood_scores, Orientation orientation) {
  const Oriented s = orient(id_scores, ood_scores, orientation);
  std::vector<std::pair<double, bool>> all;
  all.reserve(s.id.size() + s.ood.size());
  for (double v : s.id) all.emplace_back(v, false);
  for (double v : s.ood) all.emplace_back(v, true);
  std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) { return a.first > b.first; });

  const double positives = static_cast<double>(s.ood.size());
  double tp = 0, fp = 0, prev_recall = 0, area = 0;
  for (std::size_t i = 0; i < all.size();) {
    std::size_t j = i;
    while (j < all.size() && all[j].first == all[i].first) {
      (all[j].second ? tp : fp) += 1;
      ++j;
    }
    const double recall = tp / positives;
    area += (recall - prev_recall) * (tp / (tp + fp));
    prev_recall = recall;
    i = j;
  }
  return area;
}

ScoreReport evaluate(std::vector<double> id_scores, std::vector<double> ood_scores, Orientation orientation) {
  ScoreReport r;
  r.orientation = orientation;
  r.auroc = auroc(id_scores, ood_scores, orientation);
  r.fpr_at_95 = fpr_at_tpr(id_scores, ood_scores, orientation, 0.95);
  r.aupr = aupr(id_scores, ood_scores, orientation);
  r.id_scores = std::move(id_scores);
  r.ood_scores = std::move(ood_scores);
  return r;
}

void to_json(nlohmann::json& j, const ScoreReport& r) {
  j = nlohmann::json{{"fpr@95", r.fpr_at_95},
                     {"auroc", r.auroc},
                     {"aupr", r.aupr},
                     {"n_id", r.id_scores.size()},
                     {"n_ood", r.ood_scores.size()},
                     {"orientation", to_string(r.orientation)}};
}

}  // namespace apex
