#pragma once

#include <cstdio>
#include <string>
#include <vector>

#include "json.hpp"
#include "obgcs/decoders.hpp"
#include "obgcs/harness.hpp"
#include "obgcs/memorizer.hpp"
#include "obgcs/theory.hpp"

// JSON views of results. Doubles go through nlohmann's shortest round-trip
// formatting, so values read back bit-identical.

namespace obgcs {

using json = nlohmann::json;

inline json vec_json(const Vec& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

inline Vec json_vec(const json& a) {
  Vec v(static_cast<Eigen::Index>(a.size()));
  for (std::size_t i = 0; i < a.size(); ++i) v[static_cast<Eigen::Index>(i)] = a[i].get<double>();
  return v;
}

inline json to_json(const DecoderResult& r) {
  return json{{"z_hat", vec_json(r.z_hat)}, {"x_hat", vec_json(r.x_hat)},           {"objective", r.objective},
              {"loss_trace", r.loss_trace}, {"restart_index", r.restart_index}, {"iterations", r.iterations}};
}

inline DecoderResult decoder_result_from_json(const json& j) {
  DecoderResult r;
  r.z_hat = json_vec(j.at("z_hat"));
  r.x_hat = json_vec(j.at("x_hat"));
  r.objective = j.at("objective").get<double>();
  r.loss_trace = j.at("loss_trace").get<std::vector<double>>();
  r.restart_index = j.at("restart_index").get<int>();
  r.iterations = j.at("iterations").get<int>();
  return r;
}

inline json to_json(const ErrorMetrics& e) {
  return json{{"l2_err", e.l2_err},
              {"cosine", e.cosine},
              {"per_pixel", e.per_pixel},
              {"per_pixel_normalized", e.per_pixel_normalized}};
}

inline json to_json(const SrecReport& r) {
  return json{{"gamma", r.gamma},
              {"delta", r.delta},
              {"pairs_tested", r.pairs_tested},
              {"violations", r.violations},
              {"min_ratio", r.min_ratio}};
}

inline json to_json(const JlReport& r) {
  return json{{"max_distortion", r.max_distortion}, {"min_ratio", r.min_ratio}, {"max_ratio", r.max_ratio},
              {"pairs", r.pairs},                   {"pass", r.pass}};
}

inline json to_json(const MeanWidthEstimate& e) {
  return json{{"omega_hat", e.omega_hat},         {"std_err", e.std_err}, {"gaussians_used", e.gaussians_used},
              {"net_size", e.net_size},           {"directions", e.directions}, {"gamma_scale", e.gamma_scale},
              {"bound", e.bound},                 {"massart_bound", e.massart_bound}};
}

inline json to_json(const ConcentrationReport& r) {
  return json{{"linf_grad", r.linf_grad},
              {"linf_cov", r.linf_cov},
              {"spec_cov", r.spec_cov},
              {"linf_reference", r.linf_reference},
              {"spec_reference", r.spec_reference}};
}

inline json to_json(const PassRate& p) {
  return json{{"passes", p.passes}, {"runs", p.runs}, {"rate", p.rate()}};
}

inline json to_json(const MemorizerNet& m) {
  return json{{"construction", to_string(m.construction)},
              {"W", m.W},
              {"ell", m.ell},
              {"declared_width", m.width},
              {"declared_depth", m.depth},
              {"width", m.net.width()},
              {"depth", m.net.depth()}};
}

inline json to_json(const FlipReport& rep) {
  json rows = json::array();
  for (const auto& r : rep.rows)
    rows.push_back({{"m", r.m}, {"decoder", r.decoder}, {"noflip", r.noflip}, {"flip", r.flip}, {"ratio", r.ratio}});
  return json{{"rows", rows},
              {"compared_m", rep.compared_m},
              {"ls_not_worse", rep.ls_not_worse},
              {"ls_not_worse_fraction", rep.ls_not_worse_fraction()}};
}

/// One-line record with every float at 17 significant digits.
inline std::string fit_record(const std::string& decoder, const ScalingFit& f) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "{\"decoder\":%s,\"slope\":%.17g,\"intercept\":%.17g,\"r2\":%.17g,\"points\":%zu}",
                json(decoder).dump().c_str(), f.slope, f.intercept, f.r2, f.points);
  return buf;
}

}  // namespace obgcs
