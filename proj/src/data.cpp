#include "mkmmd/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numbers>
#include <string_view>

#include "mkmmd/errors.hpp"
#include "mkmmd/rng.hpp"

namespace mkmmd {

int LabeledDataset::class_count() const {
  int top = kUnlabeled;
  for (int y : labels) top = std::max(top, y);
  return top + 1;
}

bool LabeledDataset::fully_labeled() const {
  return std::all_of(labels.begin(), labels.end(), [](int y) { return y >= 0; });
}

void LabeledDataset::validate() const {
  if (static_cast<Index>(labels.size()) != features.rows()) {
    throw InputError("dataset '" + domain_tag + "': feature and label counts differ");
  }
  for (int y : labels) {
    if (y < kUnlabeled) throw InputError("dataset '" + domain_tag + "': invalid label " + std::to_string(y));
  }
}

LabeledDataset gen_moons(Index n, double noise_sigma, double rotation_deg, std::uint64_t seed) {
  if (n < 2 || n % 2 != 0) throw InputError("gen_moons: n must be even and at least 2");
  if (!(noise_sigma >= 0)) throw ParameterError("gen_moons: noise must be non-negative");
  Rng rng(seed);
  LabeledDataset out;
  out.features.resize(n, 2);
  out.labels.resize(static_cast<std::size_t>(n));
  out.domain_tag = "moons";
  out.seed = seed;
  const Index half = n / 2;
  for (Index i = 0; i < n; ++i) {
    const double t = rng.uniform(0.0, std::numbers::pi);
    const bool upper = i < half;
    out.features(i, 0) = upper ? std::cos(t) : 1.0 - std::cos(t);
    out.features(i, 1) = upper ? std::sin(t) : 0.5 - std::sin(t);
    out.labels[static_cast<std::size_t>(i)] = upper ? 0 : 1;
  }
  if (noise_sigma > 0) {
    for (Index i = 0; i < n; ++i) {
      out.features(i, 0) += noise_sigma * rng.normal();
      out.features(i, 1) += noise_sigma * rng.normal();
    }
  }
  if (rotation_deg != 0.0) {
    const double theta = rotation_deg * std::numbers::pi / 180.0;
    Eigen::Matrix2d rot;
    rot << std::cos(theta), -std::sin(theta), std::sin(theta), std::cos(theta);
    out.features = (out.features * rot.transpose()).eval();
  }
  return out;
}

namespace {

LabeledDataset draw_clusters(Index n, const MatrixXd& means, double sigma, std::uint64_t seed, std::string tag) {
  const Index k = means.rows();
  Rng rng(seed);
  LabeledDataset out;
  out.features.resize(n, means.cols());
  out.labels.reserve(static_cast<std::size_t>(n));
  out.domain_tag = std::move(tag);
  out.seed = seed;
  Index row = 0;
  for (Index c = 0; c < k; ++c) {
    const Index count = n / k + (c < n % k ? 1 : 0);
    for (Index j = 0; j < count; ++j, ++row) {
      for (Index d = 0; d < means.cols(); ++d) out.features(row, d) = means(c, d) + sigma * rng.normal();
      out.labels.push_back(static_cast<int>(c));
    }
  }
  return out;
}

}  // namespace

std::pair<LabeledDataset, LabeledDataset> gen_gaussians(Index n, const MatrixXd& means, double shared_sigma,
                                                        const VectorXd& shift, std::uint64_t seed) {
  if (means.rows() < 2) throw InputError("gen_gaussians: needs at least two classes");
  if (shift.size() != means.cols()) throw InputError("gen_gaussians: shift dimension does not match means");
  if (n < means.rows()) throw InputError("gen_gaussians: fewer samples than classes");
  if (!(shared_sigma >= 0)) throw ParameterError("gen_gaussians: sigma must be non-negative");
  const MatrixXd shifted = means.rowwise() + shift.transpose();
  return {draw_clusters(n, means, shared_sigma, derive_seed(seed, 0), "source"),
          draw_clusters(n, shifted, shared_sigma, derive_seed(seed, 1), "target")};
}

namespace {

void append_double(std::string& out, double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, 17);
  out.append(buf, res.ptr);
}

void append_row(std::string& out, int label, const auto& row) {
  out += std::to_string(label);
  for (Index c = 0; c < row.size(); ++c) {
    out.push_back(',');
    append_double(out, row(c));
  }
  out.push_back('\n');
}

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    fields.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return fields;
}

template <typename T>
T parse_number(std::string_view field, std::size_t line_no) {
  while (!field.empty() && field.front() == ' ') field.remove_prefix(1);
  while (!field.empty() && field.back() == ' ') field.remove_suffix(1);
  T value{};
  const auto* begin = field.data();
  const auto* end = begin + field.size();
  const auto res = std::from_chars(begin, end, value);
  if (field.empty() || res.ec != std::errc() || res.ptr != end) {
    throw ParseError("csv line " + std::to_string(line_no) + ": cannot parse '" + std::string(field) + "'", line_no);
  }
  return value;
}

}  // namespace

std::string format_csv(const LabeledDataset& data) {
  data.validate();
  std::string out = "label";
  for (Index c = 0; c < data.dimension(); ++c) out += ",f" + std::to_string(c);
  out.push_back('\n');
  for (Index r = 0; r < data.size(); ++r) append_row(out, data.labels[static_cast<std::size_t>(r)], data.features.row(r));
  return out;
}

LabeledDataset parse_csv(const std::string& text, std::string domain_tag) {
  std::vector<std::string_view> lines;
  std::string_view rest(text);
  while (!rest.empty()) {
    const auto pos = rest.find('\n');
    std::string_view line = rest.substr(0, pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.push_back(line);
    if (pos == std::string_view::npos) break;
    rest.remove_prefix(pos + 1);
  }
  if (lines.empty()) throw ParseError("csv: empty input", 1);

  const auto header = split_commas(lines[0]);
  if (header.size() < 2 || header[0] != "label") throw ParseError("csv line 1: expected header 'label,f0,...'", 1);
  const Index dim = static_cast<Index>(header.size()) - 1;

  std::vector<double> values;
  std::vector<int> labels;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const std::size_t line_no = i + 1;
    if (lines[i].empty()) {
      if (i + 1 == lines.size()) break;
      throw ParseError("csv line " + std::to_string(line_no) + ": empty row", line_no);
    }
    const auto fields = split_commas(lines[i]);
    if (static_cast<Index>(fields.size()) != dim + 1) {
      throw ParseError("csv line " + std::to_string(line_no) + ": expected " + std::to_string(dim + 1) +
                           " columns, found " + std::to_string(fields.size()),
                       line_no);
    }
    const int label = parse_number<int>(fields[0], line_no);
    if (label < kUnlabeled) {
      throw ParseError("csv line " + std::to_string(line_no) + ": invalid label " + std::to_string(label), line_no);
    }
    labels.push_back(label);
    for (std::size_t f = 1; f < fields.size(); ++f) values.push_back(parse_number<double>(fields[f], line_no));
  }

  LabeledDataset out;
  out.features.resize(static_cast<Index>(labels.size()), dim);
  for (Index r = 0; r < out.features.rows(); ++r) {
    for (Index c = 0; c < dim; ++c) out.features(r, c) = values[static_cast<std::size_t>(r * dim + c)];
  }
  out.labels = std::move(labels);
  out.domain_tag = std::move(domain_tag);
  return out;
}

void write_csv(const LabeledDataset& data, const std::filesystem::path& path) {
  const std::string text = format_csv(data);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

LabeledDataset read_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return parse_csv(text, path.stem().string());
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what(), e.line());
  }
}

void write_features_csv(const MatrixXd& features, const std::vector<int>& labels, const std::filesystem::path& path) {
  LabeledDataset data;
  data.features = features;
  data.labels = labels.empty() ? std::vector<int>(static_cast<std::size_t>(features.rows()), kUnlabeled) : labels;
  data.domain_tag = path.stem().string();
  write_csv(data, path);
}

LabeledDataset subset(const LabeledDataset& data, const std::vector<Index>& indices) {
  LabeledDataset out;
  out.features.resize(static_cast<Index>(indices.size()), data.dimension());
  out.labels.reserve(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    out.features.row(static_cast<Index>(i)) = data.features.row(indices[i]);
    out.labels.push_back(data.labels[static_cast<std::size_t>(indices[i])]);
  }
  out.domain_tag = data.domain_tag;
  out.seed = data.seed;
  return out;
}

}  // namespace mkmmd
