#pragma once

// Fixed-score scorer for exercising ensemble aggregation without training.

#include <memory>
#include <vector>

#include "fewshot/pet.hpp"

namespace pet_oracle {

class FixedScorer final : public fewshot::MaskedScorer {
 public:
  explicit FixedScorer(std::vector<double> scores) : scores_(std::move(scores)) {}
  fewshot::TokenScores score(const fewshot::ClozeInput&, std::span<const std::string> candidates) const override {
    return {{candidates.begin(), candidates.end()}, scores_};
  }
  fewshot::TrainStats train_mlm(std::span<const fewshot::MlmExample>, std::span<const std::string>,
                                const fewshot::TrainOptions&) override {
    return {};
  }
  nlohmann::json save() const override { return scores_; }

 private:
  std::vector<double> scores_;
};

inline fewshot::EnsembleMember member(std::vector<double> scores, double weight, int pvp_id = 1) {
  auto pvp = fewshot::builtin_pvps("so_duplicate")[0];
  pvp.id = pvp_id;
  return {pvp, 0, std::make_shared<FixedScorer>(std::move(scores)), weight};
}

}  // namespace pet_oracle
