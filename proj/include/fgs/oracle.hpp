#pragma once

// Black-box classifier interface plus the built-in desk-scale models
// (softmax-linear and one-hidden-layer ReLU MLP) and their analytic
// Lipschitz bounds.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "fgs/error.hpp"
#include "fgs/image.hpp"

namespace fgs {

inline constexpr double kProbSumTolerance = 1e-6;

struct ClassProbs {
  std::vector<double> probs;

  std::size_t size() const { return probs.size(); }
  double operator[](std::size_t c) const { return probs[c]; }

  // Ties resolve to the lowest class index.
  std::size_t argmax() const {
    std::size_t best = 0;
    for (std::size_t c = 1; c < probs.size(); ++c) {
      if (probs[c] > probs[best]) best = c;
    }
    return best;
  }
};

// Throws ProtocolError unless `probs` is a distribution over `expected` classes.
inline void validate_probs(const ClassProbs& p, std::size_t expected) {
  if (p.size() != expected) {
    throw ProtocolError("expected " + std::to_string(expected) + " probabilities, got " +
                        std::to_string(p.size()));
  }
  double sum = 0.0;
  for (double v : p.probs) {
    if (!(v >= 0.0 && v <= 1.0)) {
      throw ProtocolError("probability " + std::to_string(v) + " outside [0,1]");
    }
    sum += v;
  }
  if (std::abs(sum - 1.0) > kProbSumTolerance) {
    std::ostringstream os;
    os.precision(10);
    os << "probabilities sum to " << sum << ", expected 1 within 1e-06";
    throw ProtocolError(os.str());
  }
}

class Oracle {
 public:
  virtual ~Oracle() = default;
  virtual std::size_t class_count() const = 0;
  virtual ClassProbs classify(const Image& image) const = 0;

  std::size_t label(const Image& image) const { return classify(image).argmax(); }
};

inline std::vector<double> softmax(std::vector<double> z) {
  const double hi = *std::max_element(z.begin(), z.end());
  double sum = 0.0;
  for (double& v : z) {
    v = std::exp(v - hi);
    sum += v;
  }
  for (double& v : z) v /= sum;
  return z;
}

struct DenseLayer {
  std::size_t rows = 0;  // outputs
  std::size_t cols = 0;  // inputs
  std::vector<double> weights;  // row-major rows x cols
  std::vector<double> bias;     // rows

  double w(std::size_t r, std::size_t c) const { return weights[r * cols + c]; }

  std::vector<double> apply(const std::vector<double>& x) const {
    std::vector<double> out(bias);
    for (std::size_t r = 0; r < rows; ++r) {
      double acc = 0.0;
      for (std::size_t c = 0; c < cols; ++c) acc += weights[r * cols + c] * x[c];
      out[r] += acc;
    }
    return out;
  }

  double max_abs() const {
    double m = 0.0;
    for (double v : weights) m = std::max(m, std::abs(v));
    return m;
  }
  double max_row_l1() const {
    double m = 0.0;
    for (std::size_t r = 0; r < rows; ++r) {
      double s = 0.0;
      for (std::size_t c = 0; c < cols; ++c) s += std::abs(w(r, c));
      m = std::max(m, s);
    }
    return m;
  }
  double max_col_l1() const {
    double m = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      double s = 0.0;
      for (std::size_t r = 0; r < rows; ++r) s += std::abs(w(r, c));
      m = std::max(m, s);
    }
    return m;
  }
};

enum class ModelKind { Linear, Mlp1 };

class BuiltInModel final : public Oracle {
 public:
  BuiltInModel(ModelKind kind, std::vector<DenseLayer> layers)
      : kind_(kind), layers_(std::move(layers)) {
    const std::size_t expected = kind_ == ModelKind::Linear ? 1 : 2;
    if (layers_.size() != expected) throw InvalidArgument("model: wrong layer count");
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      const auto& l = layers_[i];
      if (l.rows == 0 || l.cols == 0 || l.weights.size() != l.rows * l.cols ||
          l.bias.size() != l.rows) {
        throw InvalidArgument("model: layer " + std::to_string(i) + " has inconsistent shape");
      }
      if (i > 0 && layers_[i - 1].rows != l.cols) {
        throw InvalidArgument("model: layer shapes do not chain");
      }
    }
  }

  static BuiltInModel linear(std::size_t input_dims, std::size_t classes,
                             std::vector<double> weights, std::vector<double> bias) {
    return BuiltInModel(ModelKind::Linear,
                        {DenseLayer{classes, input_dims, std::move(weights), std::move(bias)}});
  }

  ModelKind kind() const { return kind_; }
  std::size_t input_dims() const { return layers_.front().cols; }
  std::size_t class_count() const override { return layers_.back().rows; }
  const std::vector<DenseLayer>& layers() const { return layers_; }

  std::vector<double> logits(std::span<const double> x) const {
    std::vector<double> h(x.begin(), x.end());
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      h = layers_[i].apply(h);
      if (i + 1 < layers_.size()) {
        for (double& v : h) v = std::max(v, 0.0);
      }
    }
    return h;
  }

  ClassProbs classify(const Image& image) const override {
    if (image.size() != input_dims()) {
      throw InvalidArgument("classify: image has " + std::to_string(image.size()) +
                            " dimensions, model expects " + std::to_string(input_dims()));
    }
    return ClassProbs{softmax(logits(image.values()))};
  }

 private:
  ModelKind kind_;
  std::vector<DenseLayer> layers_;
};

namespace detail {

inline std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline bool parse_double(std::string_view tok, double& out) {
  if (!tok.empty() && tok.front() == '+') tok.remove_prefix(1);
  auto res = std::from_chars(tok.data(), tok.data() + tok.size(), out);
  return res.ec == std::errc() && res.ptr == tok.data() + tok.size();
}

inline std::vector<std::string> split_ws(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream is(line);
  std::string tok;
  while (is >> tok) out.push_back(tok);
  return out;
}

// Reads the whole file up front so a wrong line count can be reported as
// expected vs found before any value parsing.
class WeightFileReader {
 public:
  explicit WeightFileReader(std::istream& in) {
    std::string line;
    std::size_t no = 0;
    while (std::getline(in, line)) {
      ++no;
      auto toks = split_ws(line);
      if (!toks.empty()) lines_.push_back({no, std::move(toks)});
    }
  }

  [[noreturn]] void fail(std::size_t line_no, const std::string& msg) const {
    throw ParseError("weight file line " + std::to_string(line_no) + ": " + msg);
  }

  const std::vector<std::string>& header() const {
    if (lines_.empty()) throw ParseError("weight file: empty, expected a model header");
    return lines_.front().toks;
  }
  std::size_t header_line() const { return lines_.front().no; }

  // Body must hold exactly one line per weight row plus one bias line per layer.
  void expect_body_lines(std::size_t expected, const std::string& layout) const {
    const std::size_t found = lines_.size() - 1;
    if (found != expected) {
      const std::size_t at = found < expected ? (lines_.back().no + 1) : lines_[expected + 1].no;
      fail(at, "expected " + std::to_string(expected) + " data lines (" + layout + "), found " +
                   std::to_string(found));
    }
  }

  std::vector<double> numbers(std::size_t expected, const std::string& what) {
    const Line& l = lines_.at(++pos_);
    if (l.toks.size() != expected) {
      fail(l.no, what + ": expected " + std::to_string(expected) + " values, found " +
                     std::to_string(l.toks.size()));
    }
    std::vector<double> out(expected);
    for (std::size_t i = 0; i < expected; ++i) {
      if (!parse_double(l.toks[i], out[i]) || !std::isfinite(out[i])) {
        fail(l.no, "non-numeric token '" + l.toks[i] + "' in " + what);
      }
    }
    return out;
  }

  DenseLayer layer(std::size_t rows, std::size_t cols, const std::string& name) {
    DenseLayer l{rows, cols, {}, {}};
    l.weights.reserve(rows * cols);
    for (std::size_t r = 0; r < rows; ++r) {
      auto row = numbers(cols, name + " row " + std::to_string(r + 1) + " of " + std::to_string(rows));
      l.weights.insert(l.weights.end(), row.begin(), row.end());
    }
    l.bias = numbers(rows, name + " bias");
    return l;
  }

  std::size_t parse_count(const std::string& tok, const char* what) const {
    std::size_t v = 0;
    auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (res.ec != std::errc() || res.ptr != tok.data() + tok.size() || v == 0) {
      fail(header_line(), std::string("invalid ") + what + " '" + tok + "'");
    }
    return v;
  }

 private:
  struct Line {
    std::size_t no;
    std::vector<std::string> toks;
  };
  std::vector<Line> lines_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline BuiltInModel read_model(std::istream& in) {
  detail::WeightFileReader r(in);
  const auto& header = r.header();
  if (header[0] == "linear") {
    if (header.size() != 3) r.fail(r.header_line(), "linear header needs <input_dims> <class_count>");
    const auto in_dims = r.parse_count(header[1], "input_dims");
    const auto classes = r.parse_count(header[2], "class_count");
    r.expect_body_lines(classes + 1, std::to_string(classes) + " weight rows + 1 bias line");
    auto l = r.layer(classes, in_dims, "weight");
    return BuiltInModel(ModelKind::Linear, {std::move(l)});
  }
  if (header[0] == "mlp1") {
    if (header.size() != 4) {
      r.fail(r.header_line(), "mlp1 header needs <input_dims> <hidden> <class_count>");
    }
    const auto in_dims = r.parse_count(header[1], "input_dims");
    const auto hidden = r.parse_count(header[2], "hidden");
    const auto classes = r.parse_count(header[3], "class_count");
    r.expect_body_lines(hidden + classes + 2,
                        std::to_string(hidden) + " hidden rows + 1 bias line + " +
                            std::to_string(classes) + " output rows + 1 bias line");
    auto l1 = r.layer(hidden, in_dims, "hidden");
    auto l2 = r.layer(classes, hidden, "output");
    return BuiltInModel(ModelKind::Mlp1, {std::move(l1), std::move(l2)});
  }
  r.fail(r.header_line(), "unknown model kind '" + header[0] + "'");
}

inline BuiltInModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open model file '" + path.string() + "'");
  try {
    return read_model(in);
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

inline void write_model(const BuiltInModel& model, std::ostream& out) {
  const auto& ls = model.layers();
  if (model.kind() == ModelKind::Linear) {
    out << "linear " << model.input_dims() << ' ' << model.class_count() << '\n';
  } else {
    out << "mlp1 " << model.input_dims() << ' ' << ls[0].rows << ' ' << model.class_count()
        << '\n';
  }
  auto line = [&](auto first, auto last) {
    for (auto it = first; it != last; ++it) {
      if (it != first) out << ' ';
      out << detail::format_double(*it);
    }
    out << '\n';
  };
  for (const auto& l : ls) {
    for (std::size_t r = 0; r < l.rows; ++r) {
      line(l.weights.begin() + static_cast<std::ptrdiff_t>(r * l.cols),
           l.weights.begin() + static_cast<std::ptrdiff_t>((r + 1) * l.cols));
    }
    line(l.bias.begin(), l.bias.end());
  }
}

inline void save_model(const BuiltInModel& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write model file '" + path.string() + "'");
  write_model(model, out);
}

// Upper bound on the L1 -> per-class-confidence Lipschitz constant. The
// softmax Jacobian row for class c has L1 norm 2 p_c (1 - p_c) <= 1/2, so
// |dp_c| <= 1/2 * ||dz||_inf.
inline double lipschitz_bound_l1(const BuiltInModel& model) {
  const auto& ls = model.layers();
  if (model.kind() == ModelKind::Linear) return 0.5 * ls[0].max_abs();
  // ReLU is 1-Lipschitz; chain either ||.||_inf or ||.||_1 through the hidden layer.
  const double via_l1 = ls[1].max_abs() * ls[0].max_col_l1();
  const double via_inf = ls[1].max_row_l1() * ls[0].max_abs();
  return 0.5 * std::min(via_l1, via_inf);
}

struct GapEstimate {
  double ell = 1.0;
  bool no_class_change = false;  // warning: no disagreeing pair observed
};

// Minimum confidence gap over dataset pairs whose labels differ, measured in
// the class of the first image of the pair.
inline GapEstimate estimate_confidence_gap(const Oracle& oracle, std::span<const Image> dataset) {
  if (dataset.empty()) throw InvalidArgument("estimate_confidence_gap: empty dataset");
  std::vector<ClassProbs> probs;
  probs.reserve(dataset.size());
  for (const auto& img : dataset) probs.push_back(oracle.classify(img));
  GapEstimate est{1.0, true};
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const std::size_t ci = probs[i].argmax();
    for (std::size_t j = 0; j < probs.size(); ++j) {
      if (probs[j].argmax() == ci) continue;
      const double gap = std::abs(probs[j][ci] - probs[i][ci]);
      if (est.no_class_change || gap < est.ell) est.ell = gap;
      est.no_class_change = false;
    }
  }
  return est;
}

}  // namespace fgs
