#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "physloop/geometry.hpp"
#include "physloop/simulator.hpp"

namespace physloop::dsro {

// Shape vector layout. Entries 0..6 are standardized design coordinates that
// decode_shape maps to meters/radians per family; 7..10 are leg presence
// logits (negative removes the leg). Front is -y, left is +x.
enum ShapeIndex {
  kWidth, kDepth, kHeight, kThickness, kLegSize, kBackHeight, kTilt,
  kLegFrontLeft, kLegFrontRight, kLegBackLeft, kLegBackRight, kShapeDim
};

using ShapeParam = Eigen::VectorXd;

enum class Family { kChair = 0, kTable = 1 };

std::string to_string(Family family);
Family family_from_string(const std::string& name);  // throws ParseError

// Scenario descriptor the denoiser is conditioned on.
struct Condition {
  Family family = Family::kChair;
  double seat_height = 0.45;  // target top-surface height, meters
  bool occluded = false;

  static constexpr int kDim = 4;
  Eigen::VectorXd embed() const;
  bool operator==(const Condition&) const = default;
};

// Physical dimensions after decoding and clamping.
struct ShapeDims {
  double width = 0, depth = 0, height = 0, thickness = 0, leg = 0, back = 0, tilt = 0;
  std::array<bool, 4> legs{};  // FL, FR, BL, BR
};

inline constexpr double kMinDim = 0.01;
inline constexpr double kMaxDim = 3.0;
inline constexpr double kMaxTilt = 0.35;
inline constexpr double kSampleClamp = 8.0;

ShapeDims decode_dims(const ShapeParam& x, Family family);

// Height of the seat (or table top) surface above the slab center.
double top_height(const ShapeDims& d);

// Seat (or table top) slab, optional legs, and a back panel: above the seat
// for chairs, hanging below the top along the back edge for tables. Every
// part is a separate closed box, so the mesh is watertight.
geometry::Mesh decode_shape(const ShapeParam& x, Family family);

// Standardized vector of a complete four-legged piece at the family's
// reference size.
ShapeParam canonical_shape(Family family);

// Generative family the denoiser is pre-trained on.
struct FamilyModel {
  double front_logit_mean = 1.5;
  double front_logit_std = 0.3;
  double back_logit_mean = 0.8;           // visible
  double back_logit_mean_occluded = 0.3;  // occluded
  double back_logit_std = 1.0;
  double height_std = 0.5;

  ShapeParam sample(const Condition& c, std::mt19937_64& rng) const;
  // Probability that all four legs are present, the design's stable rate
  // for chairs.
  double design_stable_rate(const Condition& c) const;
};

struct NoiseSchedule {
  int steps = 64;
  std::vector<double> beta;       // index 1..T (beta[0] unused)
  std::vector<double> alpha_bar;  // index 0..T, alpha_bar[0] = 1
  bool snr_weighting = false;

  double weight(int t) const;  // w(t) > 0
};

// Linear beta schedule from beta_1 to beta_T.
NoiseSchedule linear_schedule(int steps = 64, double beta_first = 1e-3, double beta_last = 0.12);

struct Diffused {
  ShapeParam x_t;
  ShapeParam eps;
};

// x_t = sqrt(abar_t) x_0 + sqrt(1 - abar_t) eps. Throws InvalidArgument
// unless 0 <= t <= T.
Diffused forward_diffuse(const ShapeParam& x0, int t, const NoiseSchedule& schedule,
                         std::uint64_t seed);

// Small MLP: [x_t, sinusoidal t embedding, condition] -> eps_hat, SiLU
// hidden activations. Parameters live in one flat vector.
class Denoiser {
 public:
  static constexpr int kTimeDim = 8;

  Denoiser() = default;
  Denoiser(int data_dim, std::vector<int> hidden, std::uint64_t seed);

  int data_dim() const { return data_dim_; }
  int input_dim() const { return data_dim_ + kTimeDim + Condition::kDim; }
  const std::vector<int>& layer_sizes() const { return sizes_; }
  Eigen::VectorXd& params() { return theta_; }
  const Eigen::VectorXd& params() const { return theta_; }

  Eigen::VectorXd input(const ShapeParam& x_t, int t, int steps, const Condition& c) const;
  ShapeParam predict(const ShapeParam& x_t, int t, int steps, const Condition& c) const;
  // Adds d(out . upstream)/d theta into `grad` and returns the prediction.
  ShapeParam backprop(const Eigen::VectorXd& in, const ShapeParam& upstream,
                      Eigen::VectorXd& grad) const;
  ShapeParam forward(const Eigen::VectorXd& in) const;

  bool operator==(const Denoiser& o) const {
    return data_dim_ == o.data_dim_ && sizes_ == o.sizes_ && theta_ == o.theta_;
  }

 private:
  int data_dim_ = 0;
  std::vector<int> sizes_;  // input, hidden..., output
  Eigen::VectorXd theta_;
};

// Binary record: "PLDN", u32 version, u32 D, u32 layer count, u32 sizes,
// then little-endian f64 parameters. Throws ParseError/SchemaVersionMismatch.
void save_denoiser(const Denoiser& model, const std::filesystem::path& path);
Denoiser load_denoiser(const std::filesystem::path& path);
std::string encode_denoiser(const Denoiser& model);
Denoiser decode_denoiser(const std::string& bytes);

struct Batch {
  std::vector<ShapeParam> x0;
  std::vector<Condition> conditions;
  std::vector<int> labels;  // 0 or 1
};

struct LossOptions {
  // Residuals of label-0 samples are capped here (+inf: raw objective).
  double unstable_cap = std::numeric_limits<double>::infinity();
};

struct LossResult {
  double loss = 0.0;
  Eigen::VectorXd grad;  // d loss / d theta (only when requested)
  std::vector<double> residuals;  // ||eps - eps_hat||^2 per sample
};

// -T * mean_b[w(t_b) (1 - 2 l_b) ||eps_b - eps_theta(x_t, t_b)||^2] with
// t_b uniform on 1..T and eps_b ~ N(0, I) drawn from `seed`.
LossResult dsro_loss(const Batch& batch, const Denoiser& model, const NoiseSchedule& schedule,
                     std::uint64_t seed, bool with_grad = false, const LossOptions& opts = {});

// Ancestral sampling, clamped to [-kSampleClamp, kSampleClamp].
ShapeParam sample_shape(const Denoiser& model, const Condition& c, const NoiseSchedule& schedule,
                        std::uint64_t seed);

class Adam {
 public:
  explicit Adam(double lr = 1e-3, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {}
  void step(Eigen::VectorXd& theta, const Eigen::VectorXd& grad);

 private:
  double lr_, b1_, b2_, eps_;
  Eigen::VectorXd m_, v_;
  long t_ = 0;
};

struct PretrainOptions {
  int steps = 3000;
  int batch = 128;
  double lr = 2e-3;
  std::uint64_t seed = 0;
};

// Plain denoising training on the family model. Returns the loss per step.
std::vector<double> pretrain(Denoiser& model, const std::vector<Condition>& conditions,
                             const FamilyModel& family, const NoiseSchedule& schedule,
                             const PretrainOptions& opts);

enum class LabelMode { kFull, kGravityOnly };

// Stability label of a decoded shape: gravity-only, or the full interaction
// label (a sit or lean motion on the object, Type4 => 1).
int shape_label(const ShapeParam& x, const Condition& c, LabelMode mode,
                const sim::SettleParams& params = {});

bool shape_gravity_stable(const ShapeParam& x, Family family, const sim::SettleParams& params = {});

struct TrainOptions {
  int steps = 40;
  int batch = 64;
  double lr = 5e-4;
  int grad_draws = 4;  // noise draws per sample and step
  std::size_t label_cache_size = 100000;
  std::uint64_t seed = 0;
  int eval_every = 10;
  int eval_samples = 64;
  double cap_factor = 4.0;
  LabelMode label_mode = LabelMode::kFull;
  sim::SettleParams settle;
};

struct TraceRow {
  int step = 0;
  double dsro_loss = 0.0;
  double stability_rate = 0.0;  // gravity stability of fresh samples
};

struct TrainResult {
  Denoiser model;
  std::vector<TraceRow> trace;
  std::size_t simulator_calls = 0;
  std::size_t cache_hits = 0;
};

TrainResult train_dsro(const Denoiser& init, const std::vector<Condition>& conditions,
                       const NoiseSchedule& schedule, const TrainOptions& opts);

// Fraction of `n` fresh samples (seeds derived from `seed`) that pass
// gravity_stability. Conditions are cycled.
double stability_rate(const Denoiser& model, const std::vector<Condition>& conditions,
                      const NoiseSchedule& schedule, int n, std::uint64_t seed,
                      const sim::SettleParams& params = {});

std::string trace_csv(const std::vector<TraceRow>& trace);

}  // namespace physloop::dsro
