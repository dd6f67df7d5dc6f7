#include "physloop/dsro.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <deque>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "physloop/motion_templates.hpp"

namespace physloop::dsro {

namespace {

struct FamilyRef {
  double width, width_s, depth, depth_s, height, height_s, thickness, thickness_s;
  double leg, leg_s, back, back_s, tilt_s;
};

// Chairs: back rest above the seat. Tables: a modesty panel hanging below the
// rear edge of the top, which moves the center of mass backwards.
constexpr FamilyRef kChairRef{0.45, 0.03, 0.45, 0.03, 0.45, 0.03, 0.04, 0.005,
                              0.04, 0.005, 0.45, 0.05, 0.03};
constexpr FamilyRef kTableRef{1.0, 0.05, 0.6, 0.04, 0.75, 0.03, 0.04, 0.005,
                              0.03, 0.003, 0.35, 0.03, 0.02};
constexpr double kPanelThickness = 0.03;

const FamilyRef& ref(Family f) { return f == Family::kChair ? kChairRef : kTableRef; }

void check_dim(const ShapeParam& x) {
  if (x.size() != kShapeDim) {
    throw DimensionMismatch("shape vector has " + std::to_string(x.size()) + " entries, expected " +
                            std::to_string(kShapeDim));
  }
}

double clamp_dim(double v) {
  if (!std::isfinite(v)) return kMinDim;
  return std::clamp(v, kMinDim, kMaxDim);
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

double silu(double z) { return z / (1.0 + std::exp(-z)); }
double silu_grad(double z) {
  const double s = 1.0 / (1.0 + std::exp(-z));
  return s * (1.0 + z * (1.0 - s));
}

std::vector<double> normals(std::mt19937_64& rng, int n) {
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<double> out(n);
  for (double& v : out) v = g(rng);
  return out;
}

ShapeParam to_vec(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

std::string to_string(Family family) { return family == Family::kChair ? "chair" : "table"; }

Family family_from_string(const std::string& name) {
  if (name == "chair") return Family::kChair;
  if (name == "table") return Family::kTable;
  throw ParseError("unknown object family '" + name + "'");
}

Eigen::VectorXd Condition::embed() const {
  Eigen::VectorXd e(kDim);
  e << (family == Family::kChair ? 1.0 : 0.0), (family == Family::kTable ? 1.0 : 0.0),
      (seat_height - 0.6) / 0.2, occluded ? 1.0 : 0.0;
  return e;
}

ShapeDims decode_dims(const ShapeParam& x, Family family) {
  check_dim(x);
  const FamilyRef& r = ref(family);
  auto v = [&](int i) { return std::isfinite(x[i]) ? x[i] : 0.0; };
  ShapeDims d;
  d.width = clamp_dim(r.width + r.width_s * v(kWidth));
  d.depth = clamp_dim(r.depth + r.depth_s * v(kDepth));
  d.height = clamp_dim(r.height + r.height_s * v(kHeight));
  d.height = std::max(d.height, 3.0 * kMinDim);
  d.thickness = std::max(kMinDim, std::min(clamp_dim(r.thickness + r.thickness_s * v(kThickness)),
                                          d.height - 2.0 * kMinDim));
  d.leg = std::min(clamp_dim(r.leg + r.leg_s * v(kLegSize)), 0.5 * std::min(d.width, d.depth));
  d.leg = std::max(d.leg, kMinDim);
  d.back = clamp_dim(r.back + r.back_s * v(kBackHeight));
  if (family == Family::kTable) {
    d.back = std::max(kMinDim, std::min(d.back, d.height - d.thickness - kMinDim));
  }
  d.tilt = std::clamp(r.tilt_s * v(kTilt), -kMaxTilt, kMaxTilt);
  for (int i = 0; i < 4; ++i) d.legs[i] = !(x[kLegFrontLeft + i] < 0.0);
  return d;
}

double top_height(const ShapeDims& d) {
  return d.height - 0.5 * d.thickness + 0.5 * d.thickness * std::cos(d.tilt);
}

geometry::Mesh decode_shape(const ShapeParam& x, Family family) {
  const ShapeDims d = decode_dims(x, family);
  std::vector<geometry::Mesh> parts;
  const double t = d.thickness;
  const Vec3 seat_center{0.0, 0.0, d.height - 0.5 * t};
  const Mat3 tilt = Eigen::AngleAxisd(d.tilt, Vec3::UnitX()).toRotationMatrix();
  parts.push_back(geometry::make_box(RigidTransform{tilt, seat_center},
                                     {0.5 * d.width, 0.5 * d.depth, 0.5 * t}, "seat"));

  const double lx = 0.5 * (d.width - d.leg);
  const double ly = 0.5 * (d.depth - d.leg);
  const std::array<Vec3, 4> corners{Vec3{lx, -ly, 0}, Vec3{-lx, -ly, 0}, Vec3{lx, ly, 0},
                                    Vec3{-lx, ly, 0}};
  const double c = std::cos(d.tilt), s = std::sin(d.tilt);
  for (int i = 0; i < 4; ++i) {
    if (!d.legs[i]) continue;
    // Height of the tilted slab's underside above this corner.
    const double local_y = (corners[i].y() - 0.5 * t * s) / c;
    const double top = std::max(kMinDim, seat_center.z() + local_y * s - 0.5 * t * c);
    parts.push_back(geometry::make_box(Vec3{corners[i].x(), corners[i].y(), 0.5 * top},
                                       {0.5 * d.leg, 0.5 * d.leg, 0.5 * top}, "leg"));
  }

  if (family == Family::kChair) {
    parts.push_back(geometry::make_box(Vec3{0.0, 0.5 * (d.depth - t), d.height + 0.5 * d.back},
                                       {0.5 * d.width, 0.5 * t, 0.5 * d.back}, "back"));
  } else {
    const double w = std::max(kMinDim, d.width - 2.0 * d.leg);
    const double z1 = d.height - t;
    parts.push_back(geometry::make_box(Vec3{0.0, ly, z1 - 0.5 * d.back},
                                       {0.5 * w, 0.5 * kPanelThickness, 0.5 * d.back}, "panel"));
  }
  return geometry::merged(parts, to_string(family));
}

ShapeParam canonical_shape(Family) {
  ShapeParam x = ShapeParam::Zero(kShapeDim);
  x.tail(4).setConstant(1.5);
  return x;
}

ShapeParam FamilyModel::sample(const Condition& c, std::mt19937_64& rng) const {
  std::normal_distribution<double> g(0.0, 1.0);
  ShapeParam x(kShapeDim);
  for (int i = 0; i < kLegFrontLeft; ++i) x[i] = g(rng);
  const FamilyRef& r = ref(c.family);
  x[kHeight] = (c.seat_height - r.height) / r.height_s + height_std * x[kHeight];
  const double back_mean = c.occluded ? back_logit_mean_occluded : back_logit_mean;
  x[kLegFrontLeft] = front_logit_mean + front_logit_std * g(rng);
  x[kLegFrontRight] = front_logit_mean + front_logit_std * g(rng);
  x[kLegBackLeft] = back_mean + back_logit_std * g(rng);
  x[kLegBackRight] = back_mean + back_logit_std * g(rng);
  return x;
}

double FamilyModel::design_stable_rate(const Condition& c) const {
  // Stable iff both rear legs stand and at least one front leg does.
  const double back_mean = c.occluded ? back_logit_mean_occluded : back_logit_mean;
  const double q_back = normal_cdf(back_mean / back_logit_std);
  const double q_front = normal_cdf(front_logit_mean / front_logit_std);
  return q_back * q_back * (1.0 - (1.0 - q_front) * (1.0 - q_front));
}

double NoiseSchedule::weight(int t) const {
  if (!snr_weighting) return 1.0;
  const double ab = alpha_bar.at(t);
  const double snr = ab / std::max(1e-12, 1.0 - ab);
  return std::min(snr, 5.0) / snr;
}

NoiseSchedule linear_schedule(int steps, double beta_first, double beta_last) {
  if (steps < 1) throw InvalidArgument("noise schedule needs at least one step");
  if (!(beta_first > 0.0 && beta_last >= beta_first && beta_last < 1.0)) {
    throw InvalidArgument("noise schedule needs 0 < beta_1 <= beta_T < 1");
  }
  NoiseSchedule s;
  s.steps = steps;
  s.beta.assign(steps + 1, 0.0);
  s.alpha_bar.assign(steps + 1, 1.0);
  for (int t = 1; t <= steps; ++t) {
    const double u = steps == 1 ? 1.0 : static_cast<double>(t - 1) / (steps - 1);
    s.beta[t] = beta_first + (beta_last - beta_first) * u;
    s.alpha_bar[t] = s.alpha_bar[t - 1] * (1.0 - s.beta[t]);
  }
  return s;
}

Diffused forward_diffuse(const ShapeParam& x0, int t, const NoiseSchedule& schedule,
                         std::uint64_t seed) {
  if (t < 0 || t > schedule.steps) throw InvalidArgument("diffusion step out of range");
  std::mt19937_64 rng(seed);
  Diffused d;
  d.eps = to_vec(normals(rng, static_cast<int>(x0.size())));
  const double ab = schedule.alpha_bar[t];
  d.x_t = std::sqrt(ab) * x0 + std::sqrt(1.0 - ab) * d.eps;
  return d;
}

Denoiser::Denoiser(int data_dim, std::vector<int> hidden, std::uint64_t seed) : data_dim_(data_dim) {
  if (data_dim < 1) throw InvalidArgument("denoiser needs a positive data dimension");
  sizes_.push_back(input_dim());
  for (int h : hidden) {
    if (h < 1) throw InvalidArgument("hidden layer sizes must be positive");
    sizes_.push_back(h);
  }
  sizes_.push_back(data_dim);
  Eigen::Index n = 0;
  for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) n += sizes_[l] * sizes_[l + 1] + sizes_[l + 1];
  theta_ = Eigen::VectorXd::Zero(n);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  Eigen::Index off = 0;
  for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
    const int in = sizes_[l], out = sizes_[l + 1];
    const double scale = (l + 2 == sizes_.size() ? 0.1 : 1.0) / std::sqrt(static_cast<double>(in));
    for (int i = 0; i < in * out; ++i) theta_[off + i] = scale * g(rng);
    off += in * out + out;
  }
}

Eigen::VectorXd Denoiser::input(const ShapeParam& x_t, int t, int steps, const Condition& c) const {
  if (x_t.size() != data_dim_) throw DimensionMismatch("denoiser input has the wrong dimension");
  Eigen::VectorXd in(input_dim());
  in.head(data_dim_) = x_t;
  const double tau = static_cast<double>(t) / std::max(1, steps);
  for (int k = 0; k < kTimeDim / 2; ++k) {
    const double f = std::pow(4.0, k);
    in[data_dim_ + 2 * k] = std::sin(f * tau);
    in[data_dim_ + 2 * k + 1] = std::cos(f * tau);
  }
  in.tail(Condition::kDim) = c.embed();
  return in;
}

ShapeParam Denoiser::forward(const Eigen::VectorXd& in) const {
  Eigen::VectorXd a = in;
  Eigen::Index off = 0;
  for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
    const int n_in = sizes_[l], n_out = sizes_[l + 1];
    Eigen::Map<const Eigen::MatrixXd> w(theta_.data() + off, n_out, n_in);
    Eigen::Map<const Eigen::VectorXd> b(theta_.data() + off + n_in * n_out, n_out);
    Eigen::VectorXd z = w * a + b;
    if (l + 2 < sizes_.size()) z = z.unaryExpr([](double v) { return silu(v); });
    a = std::move(z);
    off += n_in * n_out + n_out;
  }
  return a;
}

ShapeParam Denoiser::predict(const ShapeParam& x_t, int t, int steps, const Condition& c) const {
  return forward(input(x_t, t, steps, c));
}

ShapeParam Denoiser::backprop(const Eigen::VectorXd& in, const ShapeParam& upstream,
                              Eigen::VectorXd& grad) const {
  if (grad.size() != theta_.size()) grad = Eigen::VectorXd::Zero(theta_.size());
  const std::size_t layers = sizes_.size() - 1;
  std::vector<Eigen::VectorXd> acts{in};
  std::vector<Eigen::VectorXd> pre;
  std::vector<Eigen::Index> offs;
  Eigen::Index off = 0;
  for (std::size_t l = 0; l < layers; ++l) {
    const int n_in = sizes_[l], n_out = sizes_[l + 1];
    Eigen::Map<const Eigen::MatrixXd> w(theta_.data() + off, n_out, n_in);
    Eigen::Map<const Eigen::VectorXd> b(theta_.data() + off + n_in * n_out, n_out);
    offs.push_back(off);
    pre.push_back(w * acts.back() + b);
    acts.push_back(l + 1 < layers ? pre.back().unaryExpr([](double v) { return silu(v); })
                                  : pre.back());
    off += n_in * n_out + n_out;
  }
  Eigen::VectorXd delta = upstream;
  for (std::size_t l = layers; l-- > 0;) {
    const int n_in = sizes_[l], n_out = sizes_[l + 1];
    if (l + 1 < layers) {
      delta = delta.cwiseProduct(pre[l].unaryExpr([](double v) { return silu_grad(v); }));
    }
    Eigen::Map<Eigen::MatrixXd> gw(grad.data() + offs[l], n_out, n_in);
    Eigen::Map<Eigen::VectorXd> gb(grad.data() + offs[l] + n_in * n_out, n_out);
    gw.noalias() += delta * acts[l].transpose();
    gb += delta;
    if (l > 0) {
      Eigen::Map<const Eigen::MatrixXd> w(theta_.data() + offs[l], n_out, n_in);
      delta = w.transpose() * delta;
    }
  }
  return acts.back();
}

namespace {

constexpr char kMagic[4] = {'P', 'L', 'D', 'N'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(buf, buf + sizeof(T));
  out.append(buf, sizeof(T));
}

template <typename T>
T get(const std::string& in, std::size_t& pos) {
  if (pos + sizeof(T) > in.size()) throw ParseError("denoiser record truncated at byte " + std::to_string(pos));
  char buf[sizeof(T)];
  std::memcpy(buf, in.data() + pos, sizeof(T));
  pos += sizeof(T);
  if constexpr (std::endian::native == std::endian::big) std::reverse(buf, buf + sizeof(T));
  T v;
  std::memcpy(&v, buf, sizeof(T));
  return v;
}

}  // namespace

std::string encode_denoiser(const Denoiser& model) {
  std::string out(kMagic, 4);
  put<std::uint32_t>(out, kVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(model.data_dim()));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(model.layer_sizes().size()));
  for (int s : model.layer_sizes()) put<std::uint32_t>(out, static_cast<std::uint32_t>(s));
  for (double p : model.params()) put<std::uint64_t>(out, std::bit_cast<std::uint64_t>(p));
  return out;
}

Denoiser decode_denoiser(const std::string& bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw ParseError("not a denoiser record (bad magic)");
  }
  std::size_t pos = 4;
  const auto version = get<std::uint32_t>(bytes, pos);
  if (version != kVersion) {
    throw SchemaVersionMismatch("denoiser record version " + std::to_string(version) +
                                ", expected " + std::to_string(kVersion));
  }
  const auto dim = static_cast<int>(get<std::uint32_t>(bytes, pos));
  const auto count = get<std::uint32_t>(bytes, pos);
  if (count < 2 || count > 64) throw ParseError("denoiser record has an invalid layer count");
  std::vector<int> sizes;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto s = get<std::uint32_t>(bytes, pos);
    if (s == 0 || s > 100000) throw ParseError("denoiser record has an invalid layer size");
    sizes.push_back(static_cast<int>(s));
  }
  if (dim < 1 || sizes.back() != dim || sizes.front() != dim + Denoiser::kTimeDim + Condition::kDim) {
    throw ParseError("denoiser record layer sizes do not match D = " + std::to_string(dim));
  }
  Denoiser model(dim, std::vector<int>(sizes.begin() + 1, sizes.end() - 1), 0);
  Eigen::VectorXd& theta = model.params();
  if (bytes.size() - pos != static_cast<std::size_t>(theta.size()) * 8) {
    throw ParseError("denoiser record has " + std::to_string(bytes.size() - pos) +
                     " parameter bytes, expected " + std::to_string(theta.size() * 8));
  }
  for (Eigen::Index i = 0; i < theta.size(); ++i) {
    theta[i] = std::bit_cast<double>(get<std::uint64_t>(bytes, pos));
  }
  return model;
}

void save_denoiser(const Denoiser& model, const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw InvalidArgument("cannot write " + path.string());
  const std::string bytes = encode_denoiser(model);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

Denoiser load_denoiser(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw MissingAsset("denoiser file not found: " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return decode_denoiser(ss.str());
}

LossResult dsro_loss(const Batch& batch, const Denoiser& model, const NoiseSchedule& schedule,
                     std::uint64_t seed, bool with_grad, const LossOptions& opts) {
  const std::size_t n = batch.x0.size();
  if (n == 0) throw EmptySelection("dsro_loss needs a non-empty batch");
  if (batch.conditions.size() != n || batch.labels.size() != n) {
    throw DimensionMismatch("batch fields have different lengths");
  }
  const int big_t = schedule.steps;
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> pick_t(1, big_t);
  LossResult r;
  if (with_grad) r.grad = Eigen::VectorXd::Zero(model.params().size());
  double sum = 0.0;
  for (std::size_t b = 0; b < n; ++b) {
    const int label = batch.labels[b];
    if (label != 0 && label != 1) throw InvalidArgument("labels must be 0 or 1");
    const int t = pick_t(rng);
    const ShapeParam eps = to_vec(normals(rng, model.data_dim()));
    const double ab = schedule.alpha_bar[t];
    const ShapeParam x_t = std::sqrt(ab) * batch.x0[b] + std::sqrt(1.0 - ab) * eps;
    const Eigen::VectorXd in = model.input(x_t, t, big_t, batch.conditions[b]);
    const ShapeParam pred = model.forward(in);
    const double res = (eps - pred).squaredNorm();
    r.residuals.push_back(res);
    const double sign = 1.0 - 2.0 * label;
    const bool capped = label == 0 && res > opts.unstable_cap;
    const double w = schedule.weight(t);
    sum += w * sign * (capped ? opts.unstable_cap : res);
    if (with_grad && !capped) {
      const ShapeParam upstream = (2.0 * big_t * w * sign / static_cast<double>(n)) * (eps - pred);
      model.backprop(in, upstream, r.grad);
    }
  }
  r.loss = -static_cast<double>(big_t) * sum / static_cast<double>(n);
  return r;
}

ShapeParam sample_shape(const Denoiser& model, const Condition& c, const NoiseSchedule& schedule,
                        std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const int d = model.data_dim();
  ShapeParam x = to_vec(normals(rng, d));
  for (int t = schedule.steps; t >= 1; --t) {
    const double beta = schedule.beta[t];
    const double ab = schedule.alpha_bar[t];
    const ShapeParam eps = model.predict(x, t, schedule.steps, c);
    x = (x - beta / std::sqrt(1.0 - ab) * eps) / std::sqrt(1.0 - beta);
    if (t > 1) {
      const double var = beta * (1.0 - schedule.alpha_bar[t - 1]) / (1.0 - ab);
      x += std::sqrt(var) * to_vec(normals(rng, d));
    }
  }
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    x[i] = std::isfinite(x[i]) ? std::clamp(x[i], -kSampleClamp, kSampleClamp) : 0.0;
  }
  return x;
}

void Adam::step(Eigen::VectorXd& theta, const Eigen::VectorXd& grad) {
  if (m_.size() != theta.size()) {
    m_ = Eigen::VectorXd::Zero(theta.size());
    v_ = Eigen::VectorXd::Zero(theta.size());
  }
  ++t_;
  m_ = b1_ * m_ + (1.0 - b1_) * grad;
  v_ = b2_ * v_ + (1.0 - b2_) * grad.cwiseAbs2();
  const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
  theta.array() -= lr_ * (m_.array() / c1) / ((v_.array() / c2).sqrt() + eps_);
}

std::vector<double> pretrain(Denoiser& model, const std::vector<Condition>& conditions,
                             const FamilyModel& family, const NoiseSchedule& schedule,
                             const PretrainOptions& opts) {
  if (conditions.empty()) throw EmptySelection("pretrain needs at least one condition");
  std::mt19937_64 rng(opts.seed);
  std::uniform_int_distribution<std::size_t> pick(0, conditions.size() - 1);
  Adam adam(opts.lr);
  std::vector<double> losses;
  for (int step = 0; step < opts.steps; ++step) {
    Batch batch;
    for (int b = 0; b < opts.batch; ++b) {
      const Condition& c = conditions[pick(rng)];
      batch.x0.push_back(family.sample(c, rng));
      batch.conditions.push_back(c);
      batch.labels.push_back(1);
    }
    const LossResult r = dsro_loss(batch, model, schedule, mix_seed(opts.seed, step), true);
    adam.step(model.params(), r.grad);
    losses.push_back(r.loss);
  }
  return losses;
}

bool shape_gravity_stable(const ShapeParam& x, Family family, const sim::SettleParams& params) {
  try {
    return sim::gravity_stability(decode_shape(x, family), RigidTransform{}, params);
  } catch (const sim::BlowUp&) {
    return false;
  }
}

int shape_label(const ShapeParam& x, const Condition& c, LabelMode mode,
                const sim::SettleParams& params) {
  if (mode == LabelMode::kGravityOnly) return shape_gravity_stable(x, c.family, params) ? 1 : 0;
  const ShapeDims d = decode_dims(x, c.family);
  auto mesh = std::make_shared<const geometry::Mesh>(decode_shape(x, c.family));
  sim::WorldState world;
  world.bodies.push_back(sim::make_body(mesh, RigidTransform{}));
  const double top = top_height(d);
  sim::KinematicHuman human;
  human.motion = c.family == Family::kChair
                     ? templates::sit_motion(Vec3{0.0, 0.0, top}, 0.0, d.depth)
                     : templates::lean_motion(Vec3{0.0, -0.5 * d.depth, top}, 0.0);
  world.human = std::move(human);
  return sim::stability_label(world, params);
}

double stability_rate(const Denoiser& model, const std::vector<Condition>& conditions,
                      const NoiseSchedule& schedule, int n, std::uint64_t seed,
                      const sim::SettleParams& params) {
  if (conditions.empty() || n < 1) throw EmptySelection("stability_rate needs conditions and n >= 1");
  int stable = 0;
  for (int i = 0; i < n; ++i) {
    const Condition& c = conditions[static_cast<std::size_t>(i) % conditions.size()];
    const ShapeParam x = sample_shape(model, c, schedule, mix_seed(seed, i));
    if (shape_gravity_stable(x, c.family, params)) ++stable;
  }
  return static_cast<double>(stable) / n;
}

TrainResult train_dsro(const Denoiser& init, const std::vector<Condition>& conditions,
                       const NoiseSchedule& schedule, const TrainOptions& opts) {
  if (conditions.empty()) throw EmptySelection("train_dsro needs at least one condition");
  if (opts.batch < 1 || opts.grad_draws < 1 || opts.eval_every < 1) {
    throw InvalidArgument("train_dsro needs batch, grad_draws and eval_every >= 1");
  }
  TrainResult out;
  out.model = init;
  Adam adam(opts.lr);
  std::mt19937_64 rng(opts.seed);
  std::uniform_int_distribution<std::size_t> pick(0, conditions.size() - 1);
  std::map<std::vector<long long>, int> cache;
  std::deque<double> stable_res;
  const std::uint64_t eval_seed = mix_seed(opts.seed, 0xE7A1);

  auto evaluate = [&](int step, double loss) {
    out.trace.push_back({step, loss,
                         stability_rate(out.model, conditions, schedule, opts.eval_samples,
                                        eval_seed, opts.settle)});
  };

  for (int step = 0; step < opts.steps; ++step) {
    Batch batch;
    for (int b = 0; b < opts.batch; ++b) {
      const Condition& c = conditions[pick(rng)];
      ShapeParam x = sample_shape(out.model, c, schedule, mix_seed(mix_seed(opts.seed, step), b));
      std::vector<long long> key{static_cast<long long>(c.family)};
      for (Eigen::Index i = 0; i < x.size(); ++i) key.push_back(std::llround(x[i] * 1000.0));
      int label;
      if (auto it = cache.find(key); it != cache.end()) {
        label = it->second;
        ++out.cache_hits;
      } else {
        label = shape_label(x, c, opts.label_mode, opts.settle);
        ++out.simulator_calls;
        if (cache.size() < opts.label_cache_size) cache.emplace(std::move(key), label);
      }
      batch.x0.push_back(std::move(x));
      batch.conditions.push_back(c);
      batch.labels.push_back(label);
    }

    LossOptions lo;
    if (!stable_res.empty()) {
      std::vector<double> sorted(stable_res.begin(), stable_res.end());
      std::nth_element(sorted.begin(), sorted.begin() + sorted.size() / 2, sorted.end());
      lo.unstable_cap = opts.cap_factor * sorted[sorted.size() / 2];
    }
    Eigen::VectorXd grad = Eigen::VectorXd::Zero(out.model.params().size());
    double loss = 0.0;
    for (int k = 0; k < opts.grad_draws; ++k) {
      const LossResult r = dsro_loss(batch, out.model, schedule,
                                     mix_seed(mix_seed(opts.seed, step), 0x10000 + k), true, lo);
      grad += r.grad / opts.grad_draws;
      loss += r.loss / opts.grad_draws;
      for (std::size_t b = 0; b < r.residuals.size(); ++b) {
        if (batch.labels[b] == 1) stable_res.push_back(r.residuals[b]);
      }
    }
    while (stable_res.size() > 1024) stable_res.pop_front();

    if (step == 0) evaluate(0, loss);
    adam.step(out.model.params(), grad);
    if ((step + 1) % opts.eval_every == 0 || step + 1 == opts.steps) evaluate(step + 1, loss);
  }
  return out;
}

std::string trace_csv(const std::vector<TraceRow>& trace) {
  std::ostringstream os;
  os << "step,dsro_loss,stability_rate\n" << std::setprecision(17);
  for (const TraceRow& r : trace) os << r.step << ',' << r.dsro_loss << ',' << r.stability_rate << '\n';
  return os.str();
}

}  // namespace physloop::dsro
