#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "mkmmd/types.hpp"

namespace mkmmd {

/// Label value for samples without a class annotation.
inline constexpr int kUnlabeled = -1;

struct LabeledDataset {
  MatrixXd features;        ///< one sample per row
  std::vector<int> labels;  ///< kUnlabeled or a class index
  std::string domain_tag;
  std::uint64_t seed = 0;

  Index size() const { return features.rows(); }
  Index dimension() const { return features.cols(); }
  /// One past the largest label; 0 when nothing is labeled.
  int class_count() const;
  bool fully_labeled() const;
  /// Throws InputError unless sizes agree and labels are >= kUnlabeled.
  void validate() const;
};

/// Two interleaved half circles with Gaussian noise, rigidly rotated about the
/// origin. Class 0 lies on (cos t, sin t), class 1 on (1 - cos t, 1/2 - sin t),
/// t uniform on [0, pi]; n / 2 samples per class, class 0 rows first.
LabeledDataset gen_moons(Index n, double noise_sigma, double rotation_deg, std::uint64_t seed);

/// Gaussian class clusters. `means` holds one class mean per row. The target
/// set repeats the construction with every mean translated by `shift` and an
/// independent random stream. Each class gets n / classes samples with the
/// remainder assigned to the lowest class indices.
std::pair<LabeledDataset, LabeledDataset> gen_gaussians(Index n, const MatrixXd& means, double shared_sigma,
                                                        const VectorXd& shift, std::uint64_t seed);

/// Dataset CSV: header `label,f0,f1,...`, LF line endings, values with 17
/// significant digits and '.' as the decimal separator. Label -1 marks an
/// unlabeled sample.
std::string format_csv(const LabeledDataset& data);
LabeledDataset parse_csv(const std::string& text, std::string domain_tag = {});

void write_csv(const LabeledDataset& data, const std::filesystem::path& path);
LabeledDataset read_csv(const std::filesystem::path& path);

/// Writes a feature matrix with the given labels (kUnlabeled when empty).
void write_features_csv(const MatrixXd& features, const std::vector<int>& labels,
                        const std::filesystem::path& path);

/// Rows of `data` selected by `indices`, preserving the given order.
LabeledDataset subset(const LabeledDataset& data, const std::vector<Index>& indices);

}  // namespace mkmmd
