#include "cfpi/jsonio.hpp"

#include <cstdio>

namespace cfpi::jsonio {

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void Writer::before_value() {
  if (pending_key_) {
    pending_key_ = false;
    return;
  }
  if (!first_.empty()) {
    if (!first_.back()) s_ += ',';
    first_.back() = false;
  }
}

void Writer::escape_into(std::string_view s) {
  s_ += '"';
  for (char c : s) {
    switch (c) {
      case '"': s_ += "\\\""; break;
      case '\\': s_ += "\\\\"; break;
      case '\n': s_ += "\\n"; break;
      case '\r': s_ += "\\r"; break;
      case '\t': s_ += "\\t"; break;
      default:
        if (static_cast<unsigned char>(c) < 0x20) {
          char buf[8];
          std::snprintf(buf, sizeof(buf), "\\u%04x", c);
          s_ += buf;
        } else {
          s_ += c;
        }
    }
  }
  s_ += '"';
}

Writer& Writer::begin_obj() {
  before_value();
  s_ += '{';
  first_.push_back(true);
  return *this;
}

Writer& Writer::end_obj() {
  s_ += '}';
  first_.pop_back();
  return *this;
}

Writer& Writer::begin_arr() {
  before_value();
  s_ += '[';
  first_.push_back(true);
  return *this;
}

Writer& Writer::end_arr() {
  s_ += ']';
  first_.pop_back();
  return *this;
}

Writer& Writer::key(std::string_view k) {
  if (!first_.back()) s_ += ',';
  first_.back() = false;
  escape_into(k);
  s_ += ':';
  pending_key_ = true;
  return *this;
}

Writer& Writer::num(double v) {
  before_value();
  s_ += fmt_double(v);
  return *this;
}

Writer& Writer::num_int(long long v) {
  before_value();
  s_ += std::to_string(v);
  return *this;
}

Writer& Writer::num_uint(unsigned long long v) {
  before_value();
  s_ += std::to_string(v);
  return *this;
}

Writer& Writer::str(std::string_view s) {
  before_value();
  escape_into(s);
  return *this;
}

Writer& Writer::boolean(bool b) {
  before_value();
  s_ += b ? "true" : "false";
  return *this;
}

Writer& Writer::null() {
  before_value();
  s_ += "null";
  return *this;
}

Writer& Writer::num_array(const std::vector<double>& xs) {
  begin_arr();
  for (double x : xs) num(x);
  return end_arr();
}

}  // namespace cfpi::jsonio
