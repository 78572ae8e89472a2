#include "tlane/temporal_fusion.hpp"

#include "tlane/errors.hpp"

#include <cmath>
#include <string>

namespace tlane {

void TemporalFeatureSequence::validate() const {
  if (features.rows() < 1 || features.cols() < 1) throw ValidationError("sequence: need T >= 1 and C >= 1");
  if (!features.allFinite()) throw ValidationError("sequence: non-finite feature");
}

LstmParameters LstmParameters::zeros(ad::Index channels, ad::Index hidden) {
  if (channels < 1 || hidden < 1) throw ValidationError("lstm: channels and hidden size must be >= 1");
  LstmParameters p;
  p.w_ih = ad::Matrix::Zero(channels, 4 * hidden);
  p.w_hh = ad::Matrix::Zero(hidden, 4 * hidden);
  p.bias = ad::Matrix::Zero(1, 4 * hidden);
  p.w_proj = ad::Matrix::Zero(hidden, channels);
  p.b_proj = ad::Matrix::Zero(1, channels);
  return p;
}

LstmParameters LstmParameters::random(ad::Index channels, ad::Index hidden, std::mt19937_64& rng) {
  LstmParameters p = zeros(channels, hidden);
  const double bound = 1.0 / std::sqrt(static_cast<double>(hidden));
  std::uniform_real_distribution<double> u(-bound, bound);
  auto fill = [&](ad::Matrix& m) {
    for (ad::Index i = 0; i < m.rows(); ++i) {
      for (ad::Index j = 0; j < m.cols(); ++j) m(i, j) = u(rng);
    }
  };
  fill(p.w_ih);
  fill(p.w_hh);
  fill(p.bias);
  fill(p.w_proj);
  fill(p.b_proj);
  p.bias.middleCols(hidden, hidden).array() += 1.0;
  return p;
}

void LstmParameters::validate() const {
  const ad::Index c = w_ih.rows();
  const ad::Index h = w_hh.rows();
  if (c < 1 || h < 1 || w_ih.cols() != 4 * h || w_hh.cols() != 4 * h || bias.rows() != 1 ||
      bias.cols() != 4 * h || w_proj.rows() != h || w_proj.cols() != c || b_proj.rows() != 1 ||
      b_proj.cols() != c) {
    throw ValidationError("lstm: inconsistent parameter shapes");
  }
  if (!w_ih.allFinite() || !w_hh.allFinite() || !bias.allFinite() || !w_proj.allFinite() ||
      !b_proj.allFinite()) {
    throw ValidationError("lstm: non-finite parameter");
  }
}

LstmVars LstmVars::leaves(ad::Tape& tape, const LstmParameters& p) {
  return {tape.leaf(p.w_ih), tape.leaf(p.w_hh), tape.leaf(p.bias), tape.leaf(p.w_proj), tape.leaf(p.b_proj)};
}

LstmVars LstmVars::constants(ad::Tape& tape, const LstmParameters& p) {
  return {tape.constant(p.w_ih), tape.constant(p.w_hh), tape.constant(p.bias), tape.constant(p.w_proj),
          tape.constant(p.b_proj)};
}

std::pair<ad::Var, ad::Var> lstm_step(const ad::Var& x, const ad::Var& h_prev, const ad::Var& c_prev,
                                      const LstmVars& p) {
  const ad::Index hidden = p.w_hh.rows();
  if (x.cols() != p.w_ih.rows()) {
    throw ValidationError("lstm_step: input has " + std::to_string(x.cols()) + " channels, expected " +
                          std::to_string(p.w_ih.rows()));
  }
  if (h_prev.cols() != hidden || c_prev.cols() != hidden || h_prev.rows() != x.rows() ||
      c_prev.rows() != x.rows()) {
    throw ValidationError("lstm_step: state shape mismatch");
  }
  const ad::Var pre = ad::add_row(ad::matmul(x, p.w_ih) + ad::matmul(h_prev, p.w_hh), p.bias);
  const ad::Var i = ad::sigmoid(ad::slice_cols(pre, 0, hidden));
  const ad::Var f = ad::sigmoid(ad::slice_cols(pre, hidden, hidden));
  const ad::Var g = ad::tanh(ad::slice_cols(pre, 2 * hidden, hidden));
  const ad::Var o = ad::sigmoid(ad::slice_cols(pre, 3 * hidden, hidden));
  const ad::Var c = f * c_prev + i * g;
  const ad::Var h = o * ad::tanh(c);
  return {h, c};
}

ad::Var fuse_frames(std::span<const ad::Var> frames, const LstmVars& p) {
  if (frames.empty()) throw ValidationError("fuse: need at least one frame");
  const ad::Index rows = frames.front().rows();
  const ad::Index cols = frames.front().cols();
  for (const ad::Var& f : frames) {
    if (f.rows() != rows || f.cols() != cols) throw ValidationError("fuse: frames differ in shape");
  }
  ad::Tape& tape = frames.front().tape();
  const ad::Index hidden = p.w_hh.rows();
  ad::Var h = tape.constant(ad::Matrix::Zero(rows, hidden));
  ad::Var c = tape.constant(ad::Matrix::Zero(rows, hidden));
  for (const ad::Var& x : frames) std::tie(h, c) = lstm_step(x, h, c, p);
  return ad::relu(ad::add_row(ad::matmul(h, p.w_proj), p.b_proj));
}

LstmState lstm_step(const ad::Matrix& x, const ad::Matrix& h_prev, const ad::Matrix& c_prev,
                    const LstmParameters& p) {
  p.validate();
  ad::Tape tape;
  const LstmVars v = LstmVars::constants(tape, p);
  auto [h, c] = lstm_step(tape.constant(x), tape.constant(h_prev), tape.constant(c_prev), v);
  return {h.value(), c.value()};
}

ad::Matrix fuse_sequence(const TemporalFeatureSequence& seq, const LstmParameters& p) {
  const TemporalFeatureSequence one[] = {seq};
  return fuse_all_anchors(one, p);
}

ad::Matrix fuse_all_anchors(std::span<const TemporalFeatureSequence> batch, const LstmParameters& p) {
  if (batch.empty()) throw ValidationError("fuse_all_anchors: empty batch");
  p.validate();
  const ad::Index t = batch.front().frames();
  const ad::Index c = batch.front().channels();
  for (const auto& s : batch) {
    s.validate();
    if (s.frames() != t || s.channels() != c) throw ValidationError("fuse_all_anchors: inconsistent shapes");
  }
  if (c != p.input_size()) throw ValidationError("fuse_all_anchors: channel count does not match parameters");
  ad::Tape tape;
  const LstmVars v = LstmVars::constants(tape, p);
  std::vector<ad::Var> frames;
  for (ad::Index step = 0; step < t; ++step) {
    ad::Matrix m(static_cast<ad::Index>(batch.size()), c);
    for (std::size_t k = 0; k < batch.size(); ++k) m.row(static_cast<ad::Index>(k)) = batch[k].features.row(step);
    frames.push_back(tape.constant(std::move(m)));
  }
  return fuse_frames(frames, v).value();
}

}  // namespace tlane
