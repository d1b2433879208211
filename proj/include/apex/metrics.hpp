#ifndef APEX_METRICS_HPP
#define APEX_METRICS_HPP

#include <string>
#include <vector>

#include <json.hpp>

namespace apex {

/// Which end of the score axis is in-distribution. Metrics flip scores so that higher = more OOD.
enum class Orientation { kLowerIsId, kHigherIsId };

const char* to_string(Orientation o);
Orientation orientation_from_string(const std::string& s);

/// Mann-Whitney statistic P(ood > id) + 0.5 P(tie).
double auroc(const std::vector<double>& id_scores, const std::vector<double>& ood_scores,
             Orientation orientation = Orientation::kLowerIsId);

/**
 * Fraction of OOD samples on the ID side of the threshold admitting at least tpr_target of the
 * ID samples. With higher = more OOD the threshold is the ceil(tpr_target * n)-th smallest ID
 * score and a sample is on the ID side when its score is <= threshold.
 */
double fpr_at_tpr(const std::vector<double>& id_scores, const std::vector<double>& ood_scores,
                  Orientation orientation = Orientation::kLowerIsId, double tpr_target = 0.95);

/// Non-interpolated average precision with OOD as the positive class.
double aupr(const std::vector<double>& id_scores, const std::vector<double>& ood_scores,
            Orientation orientation = Orientation::kLowerIsId);

struct ScoreReport {
  std::vector<double> id_scores;
  std::vector<double> ood_scores;
  Orientation orientation = Orientation::kLowerIsId;
  double fpr_at_95 = 0;
  double auroc = 0;
  double aupr = 0;
};

ScoreReport evaluate(std::vector<double> id_scores, std::vector<double> ood_scores,
                     Orientation orientation = Orientation::kLowerIsId);

/// {fpr@95, auroc, aupr, n_id, n_ood, orientation}
void to_json(nlohmann::json& j, const ScoreReport& r);

}  // namespace apex

#endif  // APEX_METRICS_HPP
