#include "simnet/trace.hpp"

#include <cstdio>

#include "json.hpp"

namespace simnet {

namespace {

void append_number(std::string& out, double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  out += buf;
}

void append_array(std::string& out, const std::vector<double>& xs) {
  out += '[';
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) out += ',';
    append_number(out, xs[i]);
  }
  out += ']';
}

std::vector<double> number_array(const nlohmann::json& j, const char* key) {
  const auto& a = j.at(key);
  if (!a.is_array()) throw std::invalid_argument(std::string(key) + " is not an array");
  std::vector<double> out;
  for (const auto& x : a) {
    if (!x.is_number()) throw std::invalid_argument(std::string(key) + " holds a non-number");
    out.push_back(x.get<double>());
  }
  return out;
}

}  // namespace

std::string format_trace_record(const TraceRecord& r) {
  std::string out = "{\"sample\":" + nlohmann::json(r.sample).dump() + ",\"t\":" + std::to_string(r.t) +
                    ",\"token\":" + nlohmann::json(r.token).dump() + ",\"gamma\":";
  append_number(out, r.gamma);
  out += ",\"alpha\":";
  append_array(out, r.alpha);
  out += ",\"alpha_tilde\":";
  append_array(out, r.alpha_tilde);
  out += ",\"beta\":";
  append_array(out, r.beta);
  out += "}\n";
  return out;
}

std::vector<TraceRecord> trace_records(const std::string& sample, const Generation& gen, const Vocab& vocab) {
  std::vector<TraceRecord> out;
  for (std::size_t t = 0; t < gen.traces.size(); ++t) {
    const StepTrace& s = gen.traces[t];
    out.push_back({sample, t, vocab.token(s.token), s.gamma, s.alpha, s.alpha_tilde, s.beta});
  }
  return out;
}

std::vector<TraceRecord> read_trace(std::istream& in) {
  std::vector<TraceRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      TraceRecord r;
      r.sample = j.at("sample").get<std::string>();
      r.t = j.at("t").get<std::size_t>();
      r.token = j.at("token").get<std::string>();
      if (!j.at("gamma").is_number()) throw std::invalid_argument("gamma is not a number");
      r.gamma = j.at("gamma").get<double>();
      r.alpha = number_array(j, "alpha");
      r.alpha_tilde = number_array(j, "alpha_tilde");
      r.beta = number_array(j, "beta");
      out.push_back(std::move(r));
    } catch (const std::exception& e) {
      throw TraceError(e.what(), lineno);
    }
  }
  return out;
}

}  // namespace simnet
