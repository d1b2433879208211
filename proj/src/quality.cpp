#include "apex/quality.hpp"

#include <algorithm>
#include <limits>

namespace apex {

HardAssignment hard_assign(const Matrix& z, const std::vector<int>& labels, const PrototypeManifold& manifold) {
  if (z.cols() != manifold.dim()) throw InputError("hard_assign: dimension mismatch");
  HardAssignment out(manifold.class_count());
  for (int c = 0; c < manifold.class_count(); ++c) out[c].resize(manifold.k(c));
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    const int c = labels[i];
    if (c < 0 || c >= manifold.class_count()) throw InputError("hard_assign: label outside the manifold's classes");
    const Matrix& p = manifold.prototypes(c);
    int best = 0;
    double best_cos = -std::numeric_limits<double>::infinity();
    for (int k = 0; k < p.rows(); ++k) {
      const double cs = cosine(p.row(k).transpose(), z.row(i).transpose());
      if (cs > best_cos) {
        best_cos = cs;
        best = k;
      }
    }
    out[c][best].push_back(i);
  }
  return out;
}

HardAssignment hard_assign(const EmbeddingSet& set, const PrototypeManifold& manifold) {
  return hard_assign(set.features(), set.labels(), manifold);
}

double separation(const PrototypeManifold& manifold, int c, int k) {
  if (manifold.class_count() < 2) throw InputError("separation undefined: manifold has a single class");
  const auto p = manifold.prototypes(c).row(k).transpose();
  double best = -std::numeric_limits<double>::infinity();
  for (int other = 0; other < manifold.class_count(); ++other) {
    if (other == c) continue;
    const Matrix& q = manifold.prototypes(other);
    for (Eigen::Index l = 0; l < q.rows(); ++l) best = std::max(best, cosine(p, q.row(l).transpose()));
  }
  return 1.0 - best;
}

FreshQuality fresh_quality(const Matrix& z, const std::vector<int>& labels, const PrototypeManifold& manifold) {
  const HardAssignment assigned = hard_assign(z, labels, manifold);
  FreshQuality out;
  for (int c = 0; c < manifold.class_count(); ++c) {
    Vector qc(manifold.k(c)), qs(manifold.k(c));
    for (int k = 0; k < manifold.k(c); ++k) {
      const auto& rows = assigned[c][k];
      Matrix members(static_cast<Eigen::Index>(rows.size()), z.cols());
      for (std::size_t r = 0; r < rows.size(); ++r) members.row(r) = z.row(rows[r]);
      qc[k] = cohesion(manifold.prototypes(c).row(k), members).value_or(0.0);
      qs[k] = separation(manifold, c, k);
    }
    out.cohesion.push_back(std::move(qc));
    out.separation.push_back(std::move(qs));
  }
  return out;
}

QualityReport collision_report(const PrototypeManifold& manifold, const EmbeddingSet& set, double threshold) {
  if (manifold.class_count() < 2) throw InputError("separation undefined: manifold has a single class");
  QualityReport report;
  report.collision_threshold = threshold;
  report.total_prototypes = manifold.total_prototypes();

  const HardAssignment assigned = hard_assign(set, manifold);
  report.min_q_s = std::numeric_limits<double>::infinity();
  for (int c = 0; c < manifold.class_count(); ++c) {
    for (int k = 0; k < manifold.k(c); ++k) {
      const auto& rows = assigned[c][k];
      Matrix members(static_cast<Eigen::Index>(rows.size()), set.dim());
      for (std::size_t r = 0; r < rows.size(); ++r) members.row(r) = set.features().row(rows[r]);
      PrototypeQuality pq;
      pq.cls = c;
      pq.index = k;
      pq.q_c = cohesion(manifold.prototypes(c).row(k), members);
      pq.q_s = separation(manifold, c, k);
      pq.q = quality(pq.q_c.value_or(0.0), pq.q_s);
      report.min_q_s = std::min(report.min_q_s, pq.q_s);
      report.prototypes.push_back(pq);
    }
  }

  std::vector<bool> involved(report.total_prototypes, false);
  for (int c = 0; c < manifold.class_count(); ++c) {
    for (int c2 = c + 1; c2 < manifold.class_count(); ++c2) {
      for (int j = 0; j < manifold.k(c); ++j) {
        for (int l = 0; l < manifold.k(c2); ++l) {
          const double dist =
              1.0 - cosine(manifold.prototypes(c).row(j).transpose(), manifold.prototypes(c2).row(l).transpose());
          if (dist < threshold) {
            report.colliding_pairs.push_back({{c, j}, {c2, l}, dist});
            involved[manifold.offset(c) + j] = true;
            involved[manifold.offset(c2) + l] = true;
          }
        }
      }
    }
  }
  report.colliding_prototypes = static_cast<int>(std::count(involved.begin(), involved.end(), true));
  report.pct_colliding = 100.0 * report.colliding_prototypes / report.total_prototypes;
  return report;
}

void to_json(nlohmann::json& j, const QualityReport& r) {
  nlohmann::json protos = nlohmann::json::array();
  for (const auto& p : r.prototypes) {
    nlohmann::json row = nlohmann::json::object();
    row["class"] = p.cls;
    row["index"] = p.index;
    row["q_c"] = p.q_c ? nlohmann::json(*p.q_c) : nlohmann::json(nullptr);
    row["q_s"] = p.q_s;
    row["q"] = p.q;
    protos.push_back(std::move(row));
  }
  nlohmann::json pairs = nlohmann::json::array();
  for (const auto& p : r.colliding_pairs) {
    pairs.push_back({{"a", {p.a.first, p.a.second}}, {"b", {p.b.first, p.b.second}}, {"distance", p.distance}});
  }
  // nlohmann::json keeps keys sorted, which gives the serialized report a stable field order.
  j = nlohmann::json{{"collision_threshold", r.collision_threshold},
                     {"colliding_pairs_count", r.colliding_pairs.size()},
                     {"min_q_s", r.min_q_s},
                     {"total_prototypes", r.total_prototypes},
                     {"colliding_prototypes", r.colliding_prototypes},
                     {"pct_colliding", r.pct_colliding},
                     {"colliding_pairs", std::move(pairs)},
                     {"prototypes", std::move(protos)}};
}

}  // namespace apex
