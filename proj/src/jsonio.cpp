#include "lmplab/jsonio.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "lmplab/errors.hpp"

namespace lmplab {

std::string fmt_real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string fmt_real_vector(const Eigen::VectorXd& v) {
  std::string out = "[";
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (i) out += ",";
    out += fmt_real(v[i]);
  }
  out += "]";
  return out;
}

std::string fmt_real_matrix_rows(const Eigen::MatrixXd& m) {
  std::string out = "[";
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    if (r) out += ",";
    out += "[";
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      if (c) out += ",";
      out += fmt_real(m(r, c));
    }
    out += "]";
  }
  out += "]";
  return out;
}

std::uint64_t fnv1a64(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string json_escape(const std::string& s) {
  std::string out;
  out.reserve(s.size() + 2);
  for (char c : s) {
    switch (c) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\r': out += "\\r"; break;
      case '\t': out += "\\t"; break;
      default:
        if (static_cast<unsigned char>(c) < 0x20) {
          char buf[8];
          std::snprintf(buf, sizeof(buf), "\\u%04x", c);
          out += buf;
        } else {
          out += c;
        }
    }
  }
  return out;
}

void JsonObjectWriter::sep() {
  if (!body_.empty()) body_ += ",";
}

void JsonObjectWriter::field_string(const std::string& key, const std::string& value) {
  sep();
  body_ += "\"" + json_escape(key) + "\":\"" + json_escape(value) + "\"";
}

void JsonObjectWriter::field_raw(const std::string& key, const std::string& raw_json) {
  sep();
  body_ += "\"" + json_escape(key) + "\":" + raw_json;
}

void JsonObjectWriter::field_real(const std::string& key, double value) {
  field_raw(key, fmt_real(value));
}

void JsonObjectWriter::field_int(const std::string& key, long long value) {
  field_raw(key, std::to_string(value));
}

void JsonObjectWriter::field_bool(const std::string& key, bool value) {
  field_raw(key, value ? "true" : "false");
}

std::string JsonObjectWriter::str() const { return "{" + body_ + "}"; }

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write file: " + path);
  out << content;
  if (!out) throw Error("short write: " + path);
}

}  // namespace lmplab
