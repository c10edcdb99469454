#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace lmplab {

/// Formats a double with 17 significant digits ("%.17g"), enough for an
/// exact float64 round-trip. All persisted reals go through this.
std::string fmt_real(double v);

std::string fmt_real_vector(const Eigen::VectorXd& v);
std::string fmt_real_matrix_rows(const Eigen::MatrixXd& m);  // [[row0],[row1],...]

/// FNV-1a 64-bit over a byte string; returned as 16 hex chars.
std::uint64_t fnv1a64(const std::string& bytes);
std::string hex64(std::uint64_t v);

std::string json_escape(const std::string& s);

/// Minimal append-style JSON object writer with caller-controlled key
/// order, so identical inputs serialize to identical bytes.
class JsonObjectWriter {
 public:
  void field_string(const std::string& key, const std::string& value);
  void field_raw(const std::string& key, const std::string& raw_json);
  void field_real(const std::string& key, double value);
  void field_int(const std::string& key, long long value);
  void field_bool(const std::string& key, bool value);
  std::string str() const;

 private:
  std::string body_;
  void sep();
};

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);

}  // namespace lmplab
