#include "causalcast/nn.hpp"

#include <array>
#include <cmath>
#include <functional>
#include <numeric>
#include <random>

#include "causalcast/error.hpp"

namespace causalcast::nn {

using Mat = Eigen::MatrixXd;
using Eigen::Index;

namespace {

Index idx(std::size_t v) { return static_cast<Index>(v); }

Mat sigmoid(const Mat& x) { return (1.0 + (-x.array()).exp()).inverse().matrix(); }

Mat tanh_of(const Mat& x) { return x.array().tanh().matrix(); }

void require_bounded(const Mat& h, const char* what) {
  if (!(h.array().abs() <= 1.0).all()) {
    throw Error(ErrorCode::NumericalError, std::string(what) + " hidden state left [-1, 1] or is not finite");
  }
}

void require_finite(const Mat& m, const char* what) {
  if (!m.allFinite()) throw Error(ErrorCode::NumericalError, std::string(what) + " is not finite");
}

struct BlockDims {
  std::size_t rows, cols;
};

std::array<BlockDims, kBlockCount> block_dims(const NetworkShape& s) {
  const std::size_t H = s.gru_hidden, H2 = s.lstm_hidden, D = s.dense;
  return {{{3 * H, s.features},
           {3 * H, H},
           {3 * H, 1},
           {3 * H, 1},
           {4 * H2, H},
           {4 * H2, H2},
           {4 * H2, 1},
           {D, H2},
           {D, 1},
           {1, D},
           {1, 1}}};
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape_, std::vector<double> data_)
    : shape(std::move(shape_)), data(std::move(data_)) {
  const std::size_t n = std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
  if (n != data.size()) {
    throw Error(ErrorCode::ShapeError, "tensor shape holds " + std::to_string(n) + " values but data has " +
                                           std::to_string(data.size()));
  }
}

void Tensor::check_finite() const {
  for (const double v : data) {
    if (!std::isfinite(v)) throw Error(ErrorCode::NumericalError, "tensor contains NaN or Inf");
  }
}

std::size_t NetworkShape::parameter_count() const {
  std::size_t n = 0;
  for (const auto& d : block_dims(*this)) n += d.rows * d.cols;
  return n;
}

void NetworkShape::validate() const {
  if (features < 1 || gru_hidden < 1 || lstm_hidden < 1 || dense < 1 || lookback < 1) {
    throw Error(ErrorCode::InvalidArgument, "network sizes must be >= 1");
  }
  if (!(dropout >= 0.0 && dropout < 1.0)) throw Error(ErrorCode::InvalidArgument, "dropout must be in [0, 1)");
}

ParameterSet::ParameterSet(const NetworkShape& shape) : shape_(shape) {
  shape.validate();
  values_.assign(shape.parameter_count(), 0.0);
}

std::size_t ParameterSet::rows(Block b) const { return block_dims(shape_)[static_cast<std::size_t>(b)].rows; }

std::size_t ParameterSet::cols(Block b) const { return block_dims(shape_)[static_cast<std::size_t>(b)].cols; }

std::size_t ParameterSet::offset(Block b) const {
  const auto dims = block_dims(shape_);
  std::size_t off = 0;
  for (std::size_t i = 0; i < static_cast<std::size_t>(b); ++i) off += dims[i].rows * dims[i].cols;
  return off;
}

Eigen::Map<Mat> ParameterSet::block(Block b) {
  return {values_.data() + offset(b), idx(rows(b)), idx(cols(b))};
}

Eigen::Map<const Mat> ParameterSet::block(Block b) const {
  return {values_.data() + offset(b), idx(rows(b)), idx(cols(b))};
}

RecurrentModel::RecurrentModel(const NetworkShape& shape) : params_(shape) {}

RecurrentModel RecurrentModel::initialized(const NetworkShape& shape, std::uint64_t seed) {
  RecurrentModel model(shape);
  auto& p = model.params_;
  std::mt19937_64 rng(seed);
  auto glorot = [&](Block b, std::size_t gates, std::size_t fan_in, std::size_t fan_out) {
    auto m = p.block(b);
    const double limit = std::sqrt(6.0 / double(fan_in + fan_out));
    std::uniform_real_distribution<double> u(-limit, limit);
    const Index gate_rows = m.rows() / idx(gates);
    for (Index g = 0; g < idx(gates); ++g) {
      for (Index c = 0; c < m.cols(); ++c) {
        for (Index r = 0; r < gate_rows; ++r) m(g * gate_rows + r, c) = u(rng);
      }
    }
  };
  const std::size_t F = shape.features, H = shape.gru_hidden, H2 = shape.lstm_hidden, D = shape.dense;
  glorot(Block::GruW, 3, F, H);
  glorot(Block::GruU, 3, H, H);
  glorot(Block::LstmW, 4, H, H2);
  glorot(Block::LstmU, 4, H2, H2);
  glorot(Block::DenseW, 1, H2, D);
  glorot(Block::HeadW, 1, D, 1);
  p.block(Block::LstmB).middleRows(idx(H2), idx(H2)).setOnes();
  return model;
}

Mat gru_forward(const Eigen::Ref<const Mat>& W, const Eigen::Ref<const Mat>& U,
                const Eigen::Ref<const Eigen::VectorXd>& b, const Eigen::Ref<const Mat>& x,
                const Eigen::Ref<const Eigen::VectorXd>& h0) {
  const Index H = h0.size();
  if (W.rows() != 3 * H || U.rows() != 3 * H || U.cols() != H || b.size() != 3 * H || W.cols() != x.cols()) {
    throw Error(ErrorCode::ShapeError, "GRU parameter shapes do not match input/hidden sizes");
  }
  require_finite(x, "GRU input");
  Mat out(x.rows(), H);
  Eigen::VectorXd h = h0;
  for (Index t = 0; t < x.rows(); ++t) {
    const Eigen::VectorXd a = W * x.row(t).transpose() + b;
    const Eigen::VectorXd z = sigmoid(a.head(H) + U.topRows(H) * h);
    const Eigen::VectorXd r = sigmoid(a.segment(H, H) + U.middleRows(H, H) * h);
    const Eigen::VectorXd rh = r.cwiseProduct(h);
    const Eigen::VectorXd n = tanh_of(a.tail(H) + U.bottomRows(H) * rh);
    h = (1.0 - z.array()).matrix().cwiseProduct(h) + z.cwiseProduct(n);
    require_finite(h, "GRU state");
    out.row(t) = h.transpose();
  }
  return out;
}

LstmOutput lstm_forward(const Eigen::Ref<const Mat>& W, const Eigen::Ref<const Mat>& U,
                        const Eigen::Ref<const Eigen::VectorXd>& b, const Eigen::Ref<const Mat>& x,
                        const Eigen::Ref<const Eigen::VectorXd>& h0, const Eigen::Ref<const Eigen::VectorXd>& c0) {
  const Index H = h0.size();
  if (c0.size() != H || W.rows() != 4 * H || U.rows() != 4 * H || U.cols() != H || b.size() != 4 * H ||
      W.cols() != x.cols()) {
    throw Error(ErrorCode::ShapeError, "LSTM parameter shapes do not match input/hidden sizes");
  }
  require_finite(x, "LSTM input");
  LstmOutput out{Mat(x.rows(), H), c0};
  Eigen::VectorXd h = h0;
  for (Index t = 0; t < x.rows(); ++t) {
    const Eigen::VectorXd a = W * x.row(t).transpose() + U * h + b;
    const Eigen::VectorXd i = sigmoid(a.head(H));
    const Eigen::VectorXd f = sigmoid(a.segment(H, H));
    const Eigen::VectorXd o = sigmoid(a.segment(2 * H, H));
    const Eigen::VectorXd g = tanh_of(a.tail(H));
    out.cell = f.cwiseProduct(out.cell) + i.cwiseProduct(g);
    require_finite(out.cell, "LSTM cell");
    h = o.cwiseProduct(tanh_of(out.cell));
    out.hidden.row(t) = h.transpose();
  }
  return out;
}

namespace {

/// Column t*B + b of every τ·B-wide matrix holds sample b at step t.
struct Cache {
  Index B = 0, tau = 0;
  Mat X;                              // F x τB
  Mat Z, R, N, HP, RH, Hs;            // H x τB
  Mat M1;                             // dropout mask on GRU outputs (empty: none)
  Mat Din;                            // LSTM input, H x τB
  Mat I, Fg, O, G, C, TC, H2P, CP;    // H2 x τB
  Mat M2;                             // dropout mask on last LSTM state
  Mat d2, pre, act;                   // H2 x B, D x B, D x B
  Eigen::RowVectorXd y;               // 1 x B
};

void check_batch(const NetworkShape& s, const Tensor& batch) {
  if (batch.shape.size() != 3 || batch.shape[0] < 1 || batch.shape[1] != s.lookback ||
      batch.shape[2] != s.features) {
    throw Error(ErrorCode::ShapeError, "batch must be {B, " + std::to_string(s.lookback) + ", " +
                                           std::to_string(s.features) + "}");
  }
  batch.check_finite();
}

Mat dropout_mask(std::mt19937_64& rng, Index rows, Index cols, double rate) {
  std::bernoulli_distribution keep(1.0 - rate);
  const double scale = 1.0 / (1.0 - rate);
  Mat m(rows, cols);
  for (Index k = 0; k < m.size(); ++k) m.data()[k] = keep(rng) ? scale : 0.0;
  return m;
}

void forward_cached(const RecurrentModel& model, const Tensor& batch, ForwardMode mode, Cache& c) {
  const auto& s = model.shape();
  check_batch(s, batch);
  const auto& p = model.params();
  const Index B = idx(batch.shape[0]), tau = idx(s.lookback), F = idx(s.features);
  const Index H = idx(s.gru_hidden), H2 = idx(s.lstm_hidden);
  c.B = B;
  c.tau = tau;

  c.X.resize(F, tau * B);
  for (Index b = 0; b < B; ++b) {
    for (Index t = 0; t < tau; ++t) {
      const double* src = batch.data.data() + (b * tau + t) * F;
      for (Index f = 0; f < F; ++f) c.X(f, t * B + b) = src[f];
    }
  }

  const bool drop = mode.train && s.dropout > 0.0;
  std::mt19937_64 rng(mode.seed);
  if (drop) {
    c.M1 = dropout_mask(rng, H, tau * B, s.dropout);
    c.M2 = dropout_mask(rng, H2, B, s.dropout);
  } else {
    c.M1.resize(0, 0);
    c.M2.resize(0, 0);
  }

  // GRU
  const auto U = p.block(Block::GruU);
  const Eigen::VectorXd gru_bias = p.block(Block::GruB) + p.block(Block::GruBU);
  Mat A = p.block(Block::GruW) * c.X;
  A.colwise() += gru_bias;
  for (auto* m : {&c.Z, &c.R, &c.N, &c.HP, &c.RH, &c.Hs}) m->resize(H, tau * B);
  Mat h = Mat::Zero(H, B);
  for (Index t = 0; t < tau; ++t) {
    const auto cols = [&](Mat& m) { return m.middleCols(t * B, B); };
    cols(c.HP) = h;
    const Mat uzr = U.topRows(2 * H) * h;
    cols(c.Z) = sigmoid(A.block(0, t * B, H, B) + uzr.topRows(H));
    cols(c.R) = sigmoid(A.block(H, t * B, H, B) + uzr.bottomRows(H));
    cols(c.RH) = cols(c.R).cwiseProduct(h);
    cols(c.N) = tanh_of(A.block(2 * H, t * B, H, B) + U.bottomRows(H) * cols(c.RH));
    h = (1.0 - cols(c.Z).array()).matrix().cwiseProduct(h) + cols(c.Z).cwiseProduct(cols(c.N));
    require_bounded(h, "GRU");
    cols(c.Hs) = h;
  }
  c.Din = drop ? Mat(c.Hs.cwiseProduct(c.M1)) : c.Hs;

  // LSTM
  const auto U2 = p.block(Block::LstmU);
  Mat A2 = p.block(Block::LstmW) * c.Din;
  A2.colwise() += Eigen::VectorXd(p.block(Block::LstmB));
  for (auto* m : {&c.I, &c.Fg, &c.O, &c.G, &c.C, &c.TC, &c.H2P, &c.CP}) m->resize(H2, tau * B);
  Mat h2 = Mat::Zero(H2, B), cell = Mat::Zero(H2, B);
  for (Index t = 0; t < tau; ++t) {
    const auto cols = [&](Mat& m) { return m.middleCols(t * B, B); };
    cols(c.H2P) = h2;
    cols(c.CP) = cell;
    const Mat a = A2.middleCols(t * B, B) + U2 * h2;
    cols(c.I) = sigmoid(a.topRows(H2));
    cols(c.Fg) = sigmoid(a.middleRows(H2, H2));
    cols(c.O) = sigmoid(a.middleRows(2 * H2, H2));
    cols(c.G) = tanh_of(a.bottomRows(H2));
    cell = cols(c.Fg).cwiseProduct(cell) + cols(c.I).cwiseProduct(cols(c.G));
    require_finite(cell, "LSTM cell");
    cols(c.C) = cell;
    cols(c.TC) = tanh_of(cell);
    h2 = cols(c.O).cwiseProduct(cols(c.TC));
    require_bounded(h2, "LSTM");
  }

  // Dense (ReLU) and linear head
  c.d2 = drop ? Mat(h2.cwiseProduct(c.M2)) : h2;
  c.pre = p.block(Block::DenseW) * c.d2;
  c.pre.colwise() += Eigen::VectorXd(p.block(Block::DenseB));
  c.act = c.pre.cwiseMax(0.0);
  c.y = p.block(Block::HeadW) * c.act;
  c.y.array() += p.block(Block::HeadB)(0, 0);
  if (!c.y.allFinite()) throw Error(ErrorCode::NumericalError, "model output is not finite");
}

}  // namespace

Eigen::VectorXd model_forward(const RecurrentModel& model, const Tensor& batch, ForwardMode mode) {
  Cache c;
  forward_cached(model, batch, mode, c);
  return c.y.transpose();
}

BackwardResult backward(const RecurrentModel& model, const Tensor& batch, std::span<const double> targets,
                        ForwardMode mode) {
  Cache c;
  forward_cached(model, batch, mode, c);
  const auto& s = model.shape();
  const auto& p = model.params();
  const Index B = c.B, tau = c.tau;
  const Index H = idx(s.gru_hidden), H2 = idx(s.lstm_hidden);
  if (idx(targets.size()) != B) throw Error(ErrorCode::ShapeError, "one target per batch sample required");
  for (const double t : targets) {
    if (!std::isfinite(t)) throw Error(ErrorCode::NumericalError, "target is not finite");
  }

  BackwardResult out{ParameterSet(s), 0.0, c.y.transpose()};
  auto& g = out.gradients;

  const Eigen::Map<const Eigen::RowVectorXd> tgt(targets.data(), B);
  const Eigen::RowVectorXd resid = c.y - tgt;
  out.loss = resid.squaredNorm() / double(B);
  const Eigen::RowVectorXd dy = resid * (2.0 / double(B));

  // Head and dense
  g.block(Block::HeadW) = dy * c.act.transpose();
  g.block(Block::HeadB)(0, 0) = dy.sum();
  const Mat dact = p.block(Block::HeadW).transpose() * dy;
  const Mat dpre = dact.cwiseProduct((c.pre.array() > 0.0).cast<double>().matrix());
  g.block(Block::DenseW) = dpre * c.d2.transpose();
  g.block(Block::DenseB) = dpre.rowwise().sum();
  Mat dh2 = p.block(Block::DenseW).transpose() * dpre;
  if (c.M2.size() > 0) dh2 = dh2.cwiseProduct(c.M2);

  // LSTM through time
  const auto U2 = p.block(Block::LstmU);
  Mat dG(4 * H2, tau * B);
  Mat dc = Mat::Zero(H2, B);
  for (Index t = tau - 1; t >= 0; --t) {
    const auto cols = [&](const Mat& m) { return m.middleCols(t * B, B); };
    const auto i = cols(c.I).array(), f = cols(c.Fg).array(), o = cols(c.O).array(), gg = cols(c.G).array();
    const auto tc = cols(c.TC).array();
    const auto dh = dh2.array();
    dc.array() += dh * o * (1.0 - tc.square());
    dG.block(0, t * B, H2, B) = (dc.array() * gg * i * (1.0 - i)).matrix();
    dG.block(H2, t * B, H2, B) = (dc.array() * cols(c.CP).array() * f * (1.0 - f)).matrix();
    dG.block(2 * H2, t * B, H2, B) = (dh * tc * o * (1.0 - o)).matrix();
    dG.block(3 * H2, t * B, H2, B) = (dc.array() * i * (1.0 - gg.square())).matrix();
    dc = (dc.array() * f).matrix();
    dh2 = U2.transpose() * dG.middleCols(t * B, B);
  }
  g.block(Block::LstmU) = dG * c.H2P.transpose();
  g.block(Block::LstmW) = dG * c.Din.transpose();
  g.block(Block::LstmB) = dG.rowwise().sum();
  Mat dHs = p.block(Block::LstmW).transpose() * dG;
  if (c.M1.size() > 0) dHs = dHs.cwiseProduct(c.M1);

  // GRU through time
  const auto U = p.block(Block::GruU);
  Mat dA(3 * H, tau * B);
  Mat carry = Mat::Zero(H, B);
  for (Index t = tau - 1; t >= 0; --t) {
    const auto cols = [&](const Mat& m) { return m.middleCols(t * B, B); };
    const Mat dh = dHs.middleCols(t * B, B) + carry;
    const auto z = cols(c.Z).array(), r = cols(c.R).array(), n = cols(c.N).array(), hp = cols(c.HP).array();
    const Mat dAn = (dh.array() * z * (1.0 - n.square())).matrix();
    const Mat drh = U.bottomRows(H).transpose() * dAn;
    const Mat dAz = (dh.array() * (n - hp) * z * (1.0 - z)).matrix();
    const Mat dAr = (drh.array() * hp * r * (1.0 - r)).matrix();
    dA.block(0, t * B, H, B) = dAz;
    dA.block(H, t * B, H, B) = dAr;
    dA.block(2 * H, t * B, H, B) = dAn;
    carry = (dh.array() * (1.0 - z) + drh.array() * r).matrix() + U.topRows(H).transpose() * dAz +
            U.middleRows(H, H).transpose() * dAr;
  }
  auto gU = g.block(Block::GruU);
  gU.topRows(2 * H) = dA.topRows(2 * H) * c.HP.transpose();
  gU.bottomRows(H) = dA.bottomRows(H) * c.RH.transpose();
  g.block(Block::GruW) = dA * c.X.transpose();
  g.block(Block::GruB) = dA.rowwise().sum();
  g.block(Block::GruBU) = g.block(Block::GruB);

  for (const double v : g.values()) {
    if (!std::isfinite(v)) throw Error(ErrorCode::NumericalError, "gradient is not finite");
  }
  return out;
}

}  // namespace causalcast::nn
