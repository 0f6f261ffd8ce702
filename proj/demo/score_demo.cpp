// Minimal library walk-through: build a synthetic benchmark in memory,
// calibrate both detectors at 95% ID TPR and evaluate one OOD set.

#include <cstdio>

#include "oodknn/oodknn.hpp"

int main() {
  oodknn::SyntheticOptions opt;
  opt.n_ood_sets = 1;
  opt.seed = 7;
  const auto bench = oodknn::make_synthetic(opt);

  const oodknn::KnnIndex index(bench.train);
  const auto& ood = bench.ood_sets.front();

  const auto knn_id = oodknn::knn_scores(index, bench.id_test.embeddings);
  const auto knn_ood = oodknn::knn_scores(index, ood.embeddings);
  const auto msp_id = oodknn::msp_scores(*bench.id_test.logits);
  const auto msp_ood = oodknn::msp_scores(*ood.logits);

  for (const auto& [name, id, od] : {std::tuple{"KNN (k=5)", &knn_id, &knn_ood},
                                      std::tuple{"MSP", &msp_id, &msp_ood}}) {
    const auto eval = oodknn::evaluate(id->values, od->values, 0.95);
    const auto theta = oodknn::calibrate_threshold(*id, 0.95);
    std::printf("%-10s AUROC %6.2f  FPR@95TPR %6.2f  threshold %.6f\n", name, 100 * eval.auroc,
                100 * eval.fpr_at_target, theta.value);
  }

  const auto probe = oodknn::knn_score(index, ood.embeddings.row(0));
  const auto theta = oodknn::calibrate_threshold(knn_id, 0.95);
  std::printf("first OOD sample: score %.6f -> %s\n", probe.value,
              std::string(oodknn::to_string(oodknn::classify(probe, theta))).c_str());
}
