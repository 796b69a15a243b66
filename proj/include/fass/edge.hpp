#pragma once

#include <vector>

#include "fass/losses.hpp"
#include "fass/tensor.hpp"
#include "fass/volume.hpp"

namespace fass {

enum class EdgeSource { Mask, Image };

struct ECConfig {
  int radius = 5;        // foreground-ratio window
  int k = 10;            // NMS neighbour count
  int truth_radius = 2;  // dilation of retained points in M_truth
  double epsilon = 1e-6;
  EdgeSource source = EdgeSource::Mask;
  // Image mode: voxels whose gradient magnitude reaches this quantile.
  double image_quantile = 0.9;
  // Predicted keypoint candidates kept before NMS, highest probability first.
  int max_candidates = 2048;

  void validate() const;
};

struct BoundaryPoint {
  Coord3 pos{};
  double ratio = 0.0;
  double score = 0.0;
};

// Foreground voxels with at least one 6-connected background neighbour
// (outside the volume counts as background), in lexicographic order.
std::vector<Coord3> extract_boundary(const Mask& mask);

// Voxels whose central-difference gradient magnitude reaches the given
// quantile of all magnitudes, in lexicographic order.
std::vector<Coord3> image_edges(const Volume& v, double quantile);

// |Ball(r, b) n fore| / |Ball(r, b) n volume|.
double foreground_ratio(const Coord3& b, const Mask& fore, int r);
double irregularity_score(double p);

std::vector<BoundaryPoint> score_points(const std::vector<Coord3>& points, const Mask& fore, int r);

// Keeps points whose score strictly exceeds that of each of their k nearest
// neighbours (Euclidean; distance ties broken by lexicographic position).
// Input order is preserved.
std::vector<BoundaryPoint> nms_filter(const std::vector<BoundaryPoint>& points, int k);

// Union of radius-r balls around the points, clipped to the volume.
Mask build_truth_map(const std::vector<Coord3>& points, const Dims3& dims, int r);

struct GroundTruthKeypoints {
  std::vector<BoundaryPoint> retained;
  Mask truth;
};

// Boundary extraction, scoring, NMS and M_truth for every foreground class c,
// with region label >= c. Pure function of its inputs.
GroundTruthKeypoints ground_truth_keypoints(const Volume& patch, int num_classes, const ECConfig& cfg);

// Positive-weighted binary cross-entropy between probabilities [1, D, H, W]
// and the truth map, averaged over voxels.
LossTerm match_loss(const Tensor& m_pred, const Mask& truth);

// Voxels with probability above 0.5, highest max_candidates first, then NMS
// with the probabilities as scores.
std::vector<Coord3> predicted_keypoints(const Tensor& m_pred, const ECConfig& cfg);

// Greedy nearest-neighbour chain from the lexicographically smallest point.
std::vector<Coord3> chain_points(std::vector<Coord3> points);

// Mean over consecutive chain pairs of rho * |M(p_i) - M(p_i+1)| with
// rho = |d_i - d_i+1| / (|p_i - p_i+1| + eps) and d the distance to the
// nearest truth point.
LossTerm continuity_loss(const Tensor& m_pred, const std::vector<Coord3>& pred_points,
                         const std::vector<Coord3>& truth_points, double epsilon = 1e-6);

// (L_match + L_cont) / 2; a skipped term contributes zero.
Tensor ec_loss(const LossTerm& match, const LossTerm& cont);

}  // namespace fass
