#pragma once

// Per-anchor LSTM fusion over a short clip of frames. One set of weights is
// shared by every anchor; anchors are processed as rows of a batch.

#include "tlane/ad.hpp"

#include <random>
#include <span>
#include <utility>
#include <vector>

namespace tlane {

/// Features of one anchor over T frames, oldest first (T x C).
struct TemporalFeatureSequence {
  ad::Matrix features;

  ad::Index frames() const { return features.rows(); }
  ad::Index channels() const { return features.cols(); }
  void validate() const;
};

/// Gate blocks are laid out [input, forget, cell candidate, output] along the
/// 4H axis.
struct LstmParameters {
  ad::Matrix w_ih;    // C x 4H
  ad::Matrix w_hh;    // H x 4H
  ad::Matrix bias;    // 1 x 4H
  ad::Matrix w_proj;  // H x C
  ad::Matrix b_proj;  // 1 x C

  ad::Index input_size() const { return w_ih.rows(); }
  ad::Index hidden_size() const { return w_hh.rows(); }

  static LstmParameters zeros(ad::Index channels, ad::Index hidden);
  /// Uniform in [-1/sqrt(H), 1/sqrt(H)], forget-gate bias shifted by +1.
  static LstmParameters random(ad::Index channels, ad::Index hidden, std::mt19937_64& rng);
  void validate() const;
};

/// LstmParameters placed on a tape.
struct LstmVars {
  ad::Var w_ih, w_hh, bias, w_proj, b_proj;

  static LstmVars leaves(ad::Tape& tape, const LstmParameters& p);
  static LstmVars constants(ad::Tape& tape, const LstmParameters& p);
};

/// One cell step for a batch of rows: x (n x C), h and c (n x H).
std::pair<ad::Var, ad::Var> lstm_step(const ad::Var& x, const ad::Var& h_prev, const ad::Var& c_prev,
                                      const LstmVars& p);

/// Runs the cell over `frames` (each n x C, oldest first) from zero state and
/// returns relu(h_T * W + b) (n x C).
ad::Var fuse_frames(std::span<const ad::Var> frames, const LstmVars& p);

struct LstmState {
  ad::Matrix h;
  ad::Matrix c;
};

LstmState lstm_step(const ad::Matrix& x, const ad::Matrix& h_prev, const ad::Matrix& c_prev,
                    const LstmParameters& p);
/// Fused 1 x C feature of one anchor.
ad::Matrix fuse_sequence(const TemporalFeatureSequence& seq, const LstmParameters& p);
/// Fused K x C features, one row per anchor.
ad::Matrix fuse_all_anchors(std::span<const TemporalFeatureSequence> batch, const LstmParameters& p);

}  // namespace tlane
