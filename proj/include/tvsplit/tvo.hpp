#pragma once

// Train-validation bilevel search over mixture weights: a trainer callback
// fits a model on the training split at each grid point of the l1 ball, the
// validation split picks a delta-approximate minimizer (lowest index wins),
// and finite differences of the validation risk give outer gradients. Risk
// evaluators cover squared, hinge, and 0-1 losses.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "tvsplit/common.hpp"
#include "tvsplit/featmap.hpp"

namespace tvsplit {

struct EmptyDataset : Error {
  using Error::Error;
};
struct TrainerFailure : Error {
  using Error::Error;
};
struct StepTooLarge : Error {
  using Error::Error;
};

enum class Loss { squared, hinge, zero_one };

inline const char* loss_name(Loss loss) {
  switch (loss) {
    case Loss::squared: return "squared";
    case Loss::hinge: return "hinge";
    default: return "zero_one";
  }
}

inline Loss loss_from_name(const std::string& name) {
  if (name == "squared") return Loss::squared;
  if (name == "hinge") return Loss::hinge;
  if (name == "zero_one") return Loss::zero_one;
  throw InvalidArgument("loss_from_name: unknown loss '" + name + "'");
}

// Mean loss of precomputed predictions. Ties y*f = 0 count as 0-1 errors, so
// the zero predictor has 0-1 risk exactly 1.
inline double evaluate_risk(const std::vector<double>& predictions, const SampleSet& data,
                            Loss loss) {
  if (data.n() == 0) throw EmptyDataset("evaluate_risk: empty dataset");
  if (predictions.size() != data.n())
    throw DimensionMismatch("evaluate_risk: prediction count mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < data.n(); ++i) {
    const double y = data.labels[i], f = predictions[i];
    switch (loss) {
      case Loss::squared: acc += (f - y) * (f - y); break;
      case Loss::hinge: acc += std::max(0.0, 1.0 - y * f); break;
      case Loss::zero_one: acc += (y * f <= 0.0) ? 1.0 : 0.0; break;
    }
  }
  return acc / static_cast<double>(data.n());
}

struct TrainedModel {
  std::function<std::vector<double>(const SampleSet&)> predict;
  double train_risk = std::numeric_limits<double>::quiet_NaN();
  double excess_form = std::numeric_limits<double>::quiet_NaN();
};

// Deterministic in alpha; trains on the (captured) training split only.
using Trainer = std::function<TrainedModel(const HyperPoint&)>;

inline double evaluate_risk(const TrainedModel& model, const SampleSet& data, Loss loss) {
  if (data.n() == 0) throw EmptyDataset("evaluate_risk: empty dataset");
  return evaluate_risk(model.predict(data), data, loss);
}

struct SearchSpace {
  std::size_t h = 0;
  std::vector<HyperPoint> grid;
  double delta = 0.0;
};

inline void validate_search_space(const SearchSpace& space) {
  if (space.grid.empty()) throw InvalidArgument("search space: empty grid");
  if (!(space.delta >= 0.0)) throw InvalidArgument("search space: delta must be >= 0");
  for (const HyperPoint& a : space.grid) {
    if (a.size() != space.h)
      throw DimensionMismatch("search space: grid point dimension mismatch");
    if (l1_norm(a) > 1.0 + 1e-12)
      throw InvalidArgument("search space: grid point outside the unit l1 ball");
  }
}

struct AlphaRow {
  HyperPoint alpha;
  double train_risk = std::numeric_limits<double>::quiet_NaN();
  double val_risk = std::numeric_limits<double>::quiet_NaN();
  double test_risk = std::numeric_limits<double>::quiet_NaN();
  double excess_form = std::numeric_limits<double>::quiet_NaN();
  bool failed = false;
  std::string failure;
};

struct SearchOutcome {
  HyperPoint alpha_hat;
  std::size_t alpha_index = 0;
  double val_risk = std::numeric_limits<double>::quiet_NaN();
  std::vector<AlphaRow> per_alpha_table;
  bool any_failed = false;
};

// Trains at every grid point (independent jobs over a worker pool; rows are
// assembled by grid index, so results do not depend on scheduling), then
// returns the lowest-index point whose validation risk is within delta of the
// minimum. Failed trainings are flagged and excluded from the argmin.
inline SearchOutcome tvo_search(const Trainer& trainer, const SearchSpace& space,
                                const SampleSet& val, Loss loss,
                                const SampleSet* test = nullptr,
                                std::size_t workers = 0) {
  validate_search_space(space);
  if (val.n() == 0) throw EmptyDataset("tvo_search: empty validation set");

  SearchOutcome out;
  out.per_alpha_table.resize(space.grid.size());
  parallel_for_indexed(
      space.grid.size(),
      [&](std::size_t i) {
        AlphaRow& row = out.per_alpha_table[i];
        row.alpha = space.grid[i];
        try {
          TrainedModel model = trainer(space.grid[i]);
          row.train_risk = model.train_risk;
          row.excess_form = model.excess_form;
          row.val_risk = evaluate_risk(model, val, loss);
          if (test != nullptr) row.test_risk = evaluate_risk(model, *test, loss);
        } catch (const std::exception& e) {
          row.failed = true;
          row.failure = e.what();
        }
      },
      workers);

  double best = std::numeric_limits<double>::infinity();
  for (const AlphaRow& row : out.per_alpha_table) {
    if (row.failed) {
      out.any_failed = true;
      continue;
    }
    best = std::min(best, row.val_risk);
  }
  if (!std::isfinite(best))
    throw TrainerFailure("tvo_search: training failed at every grid point");
  for (std::size_t i = 0; i < out.per_alpha_table.size(); ++i) {
    const AlphaRow& row = out.per_alpha_table[i];
    if (!row.failed && row.val_risk <= best + space.delta) {
      out.alpha_hat = row.alpha;
      out.alpha_index = i;
      out.val_risk = row.val_risk;
      break;
    }
  }
  return out;
}

struct HyperGrad {
  std::vector<double> grad;
  std::vector<bool> clipped;  // per coordinate: step shortened to stay in the ball
};

// Central differences of the validation risk in each mixture coordinate. A
// perturbation that would leave the unit l1 ball is shortened to the largest
// feasible step on that side and flagged; if neither side can move, the
// coordinate is not differentiable within the ball.
inline HyperGrad hypergrad_fd(const Trainer& trainer, const HyperPoint& a,
                              const SampleSet& val, Loss loss, double step) {
  if (!(step > 0.0)) throw InvalidArgument("hypergrad_fd: step must be positive");
  if (val.n() == 0) throw EmptyDataset("hypergrad_fd: empty validation set");
  const double slack = 1.0 - l1_norm(a);
  if (slack < -1e-12) throw InvalidArgument("hypergrad_fd: point outside the unit l1 ball");

  auto val_risk_at = [&](const HyperPoint& point) {
    try {
      TrainedModel model = trainer(point);
      return evaluate_risk(model, val, loss);
    } catch (const EmptyDataset&) {
      throw;
    } catch (const std::exception& e) {
      throw StepTooLarge(std::string("hypergrad_fd: perturbed training failed: ") +
                         e.what());
    }
  };

  HyperGrad out;
  out.grad.assign(a.size(), 0.0);
  out.clipped.assign(a.size(), false);
  for (std::size_t i = 0; i < a.size(); ++i) {
    // Moving +tau in coordinate i changes the l1 norm by |a_i + tau| - |a_i|,
    // so the feasible forward step is slack + 2*max(0, -a_i) (and mirrored).
    const double room_plus = std::max(0.0, slack) + 2.0 * std::max(0.0, -a[i]);
    const double room_minus = std::max(0.0, slack) + 2.0 * std::max(0.0, a[i]);
    const double tau_plus = std::min(step, room_plus);
    const double tau_minus = std::min(step, room_minus);
    if (tau_plus + tau_minus < 1e-12 * step)
      throw InvalidArgument("hypergrad_fd: coordinate " + std::to_string(i) +
                            " cannot move inside the ball");
    out.clipped[i] = tau_plus < step || tau_minus < step;

    HyperPoint plus = a, minus = a;
    plus[i] += tau_plus;
    minus[i] -= tau_minus;
    out.grad[i] = (val_risk_at(plus) - val_risk_at(minus)) / (tau_plus + tau_minus);
  }
  return out;
}

// Euclidean projection onto the unit l1 ball (sort-and-threshold).
inline HyperPoint project_l1_ball(HyperPoint v) {
  if (l1_norm(v) <= 1.0) return v;
  std::vector<double> mag(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) mag[i] = std::abs(v[i]);
  std::sort(mag.begin(), mag.end(), std::greater<double>());
  double cum = 0.0, theta = 0.0;
  for (std::size_t j = 0; j < mag.size(); ++j) {
    cum += mag[j];
    const double cand = (cum - 1.0) / static_cast<double>(j + 1);
    if (mag[j] - cand > 0.0) theta = cand;
  }
  for (double& t : v)
    t = (t > 0.0 ? 1.0 : -1.0) * std::max(std::abs(t) - theta, 0.0);
  return v;
}

struct DescentStep {
  HyperPoint alpha;
  double val_risk = 0.0;
};

// Small projected-descent demo on the outer objective; each iterate records
// the validation risk of the model trained at that mixture. Iterates are kept
// strictly inside the ball (radius 1 - 2*fd_step) so every finite-difference
// coordinate has room to move on both sides.
inline std::vector<DescentStep> projected_descent(const Trainer& trainer, HyperPoint a,
                                                  const SampleSet& val, Loss loss,
                                                  double fd_step, double lr,
                                                  std::size_t iters) {
  if (!(lr > 0.0)) throw InvalidArgument("projected_descent: lr must be positive");
  if (!(fd_step > 0.0) || !(fd_step < 0.25))
    throw InvalidArgument("projected_descent: fd_step must lie in (0, 0.25)");
  const double radius = 1.0 - 2.0 * fd_step;
  auto project_interior = [radius](HyperPoint v) {
    for (double& t : v) t /= radius;
    v = project_l1_ball(std::move(v));
    for (double& t : v) t *= radius;
    return v;
  };
  a = project_interior(std::move(a));
  std::vector<DescentStep> path;
  for (std::size_t t = 0; t <= iters; ++t) {
    DescentStep stepinfo;
    stepinfo.alpha = a;
    stepinfo.val_risk = evaluate_risk(trainer(a), val, loss);
    path.push_back(stepinfo);
    if (t == iters) break;
    HyperGrad g = hypergrad_fd(trainer, a, val, loss, fd_step);
    for (std::size_t i = 0; i < a.size(); ++i) a[i] -= lr * g.grad[i];
    a = project_interior(std::move(a));
  }
  return path;
}

// Ridge/min-norm trainer over a fixed feature family and training split; the
// excess-risk form sqrt(B y^T (Phi Phi^T)^{-1} y / n) is attached when the
// training gram is invertible.
inline Trainer make_feature_trainer(std::shared_ptr<const FeatureFamily> fam,
                                    SampleSet train, double lambda) {
  if (!fam) throw InvalidArgument("make_feature_trainer: null family");
  if (train.n() == 0) throw EmptyDataset("make_feature_trainer: empty training set");
  auto shared_train = std::make_shared<const SampleSet>(std::move(train));
  return [fam, shared_train, lambda](const HyperPoint& alpha) {
    FitResult fit = ridge_fit(*fam, alpha, *shared_train, lambda);
    TrainedModel model;
    std::vector<double> train_preds = predict_all(*fam, fit, *shared_train);
    model.train_risk = evaluate_risk(train_preds, *shared_train, Loss::squared);
    try {
      model.excess_form = excess_risk_form(*fam, alpha, *shared_train);
    } catch (const SingularGram&) {
      // Leave NaN: the form is undefined when the gram loses rank.
    }
    auto fit_copy = std::make_shared<const FitResult>(std::move(fit));
    model.predict = [fam, fit_copy](const SampleSet& data) {
      return predict_all(*fam, *fit_copy, data);
    };
    return model;
  };
}

}  // namespace tvsplit
