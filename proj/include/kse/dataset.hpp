#pragma once

#include <Eigen/Dense>

#include <string>
#include <vector>

#include "kse/kernel.hpp"

namespace kse {

enum class MaskKind { irm, ibm };
enum class SplitTag { train, val, test };

const char* to_string(MaskKind kind);
const char* to_string(SplitTag tag);

/// Contiguous frame range of one mixture inside a Dataset.
struct Segment {
  std::string utterance;
  std::string noise;
  double snr_db = 0.0;
  Eigen::Index begin = 0;
  Eigen::Index frames = 0;
};

/// Paired features and frame-major mask targets.
struct Dataset {
  FeatureMatrix X;
  Eigen::MatrixXd Y;
  MaskKind mask = MaskKind::irm;
  SplitTag split = SplitTag::train;
  std::vector<Segment> segments;

  Eigen::Index rows() const { return X.rows(); }
};

}  // namespace kse
