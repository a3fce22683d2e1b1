#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fsce/model.hpp"
#include "fsce/synth.hpp"

namespace fsce {

// rows = true class, cols = predicted.
struct ConfusionMatrix {
  int k = 0;
  std::vector<std::uint64_t> counts;

  std::uint64_t at(int truth, int pred) const { return counts[static_cast<std::size_t>(truth) * k + pred]; }
  std::uint64_t total() const;
  std::uint64_t trace() const;
};

double accuracy(const std::vector<int>& preds, const std::vector<int>& labels);
ConfusionMatrix confusion(const std::vector<int>& preds, const std::vector<int>& labels, int k);

// Mean silhouette with Euclidean distance. features is N x D row-major.
double silhouette(const std::vector<double>& features, int dim, const std::vector<int>& labels);

// relu(sum_k alpha_k A_k), alpha_k = spatial mean of dA_k, for one sample of
// (1, C, h, w) activations and gradients; bilinearly resized to out_h x out_w
// and divided by its max unless the map is all zero.
Image grad_cam_map(const Tensor<double>& activations, const Tensor<double>& gradients, int out_h, int out_w);

// Grad-CAM of class_id for a single (1, 1, H, W) input at the named tap.
Image grad_cam(Model<float>& model, const Tensor<float>& input, int class_id, const std::string& tap);

// Binary PGM (P5, maxval 255) of round(255 v).
std::vector<std::uint8_t> encode_pgm(const Image& img);
void write_pgm(const std::string& path, const Image& img);

}  // namespace fsce
