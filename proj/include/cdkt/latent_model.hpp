#pragma once

#include <cmath>
#include <istream>
#include <numbers>
#include <ostream>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "cdkt/cascade.hpp"

namespace cdkt {

enum class Variant { CDK, CDKT };

inline std::string_view to_string(Variant v) { return v == Variant::CDK ? "CDK" : "CDKT"; }

// Per-user embeddings in R^dim, stored row-major, plus the squared-distance
// threshold tau for the thresholded variant.
class LatentModel {
 public:
  LatentModel(UserTable users, std::size_t dim, Variant variant, std::optional<double> tau = std::nullopt)
      : users_(std::move(users)), dim_(dim), variant_(variant), coords_(users_.size() * dim, 0.0) {
    if (dim_ == 0) throw std::invalid_argument("LatentModel: dim must be >= 1");
    if (variant_ == Variant::CDKT) set_tau(tau.value_or(0.0));
    else if (tau) throw std::invalid_argument("LatentModel: CDK models carry no threshold");
  }

  const UserTable& users() const noexcept { return users_; }
  std::size_t num_users() const noexcept { return users_.size(); }
  std::size_t dim() const noexcept { return dim_; }
  Variant variant() const noexcept { return variant_; }
  bool has_tau() const noexcept { return tau_.has_value(); }

  double tau() const {
    if (!tau_) throw std::logic_error("LatentModel: CDK models have no threshold");
    return *tau_;
  }

  void set_tau(double tau) {
    if (variant_ != Variant::CDKT) throw std::logic_error("LatentModel: CDK models have no threshold");
    if (!std::isfinite(tau) || tau < 0.0) throw std::invalid_argument("LatentModel: tau must be finite and >= 0");
    tau_ = tau;
  }

  std::span<double> embedding(UserIndex u) {
    check(u);
    return {coords_.data() + static_cast<std::size_t>(u) * dim_, dim_};
  }
  std::span<const double> embedding(UserIndex u) const {
    check(u);
    return {coords_.data() + static_cast<std::size_t>(u) * dim_, dim_};
  }

  std::span<double> coordinates() noexcept { return coords_; }
  std::span<const double> coordinates() const noexcept { return coords_; }

  friend bool operator==(const LatentModel& a, const LatentModel& b) {
    return a.dim_ == b.dim_ && a.variant_ == b.variant_ && a.tau_ == b.tau_ && a.users_ == b.users_ &&
           a.coords_ == b.coords_;
  }

 private:
  void check(UserIndex u) const {
    if (u >= users_.size()) throw std::out_of_range("LatentModel: user index " + std::to_string(u) + " out of range");
  }

  UserTable users_;
  std::size_t dim_;
  Variant variant_;
  std::optional<double> tau_;
  std::vector<double> coords_;
};

inline double sq_distance(std::span<const double> a, std::span<const double> b) noexcept {
  double acc = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double d = a[k] - b[k];
    acc += d * d;
  }
  return acc;
}

inline double sq_distance(const LatentModel& model, UserIndex a, UserIndex b) {
  return sq_distance(model.embedding(a), model.embedding(b));
}

inline double sq_distance(const LatentModel& model, std::string_view a, std::string_view b) {
  return sq_distance(model, model.users().at(a), model.users().at(b));
}

struct HeatParams {
  double t = 1.0;
  double h_tau = 0.0;  // carried as metadata; computation uses tau only

  void validate() const {
    if (!(t > 0.0)) throw std::invalid_argument("HeatParams: t must be > 0");
  }
};

// Fundamental solution of the heat equation in R^n at squared distance d2.
inline double heat_kernel(double t, double d2, std::size_t n) {
  if (!(t > 0.0)) throw std::invalid_argument("heat_kernel: t must be > 0");
  if (n == 0) throw std::invalid_argument("heat_kernel: n must be >= 1");
  const double norm = std::pow(4.0 * std::numbers::pi * t, -0.5 * static_cast<double>(n));
  return norm * std::exp(-d2 / (4.0 * t));
}

class ModelFormatError : public std::runtime_error {
 public:
  ModelFormatError(std::size_t line, const std::string& what)
      : std::runtime_error("model line " + std::to_string(line) + ": " + what) {}
};

inline constexpr std::string_view kModelMagic = "CDKT-MODEL v1";

// Text persistence: magic line, a header line, then one `<id>\t<f_1> ... <f_n>`
// row per user. Values carry 17 significant digits so they read back exactly.
inline void write_model(std::ostream& out, const LatentModel& model) {
  out << kModelMagic << '\n';
  out << "variant=" << to_string(model.variant()) << " dim=" << model.dim() << " users=" << model.num_users()
      << " tau=" << (model.has_tau() ? text::format_real17(model.tau()) : std::string("none")) << '\n';
  for (UserIndex u = 0; u < model.num_users(); ++u) {
    out << model.users().id(u) << '\t';
    const auto z = model.embedding(u);
    for (std::size_t k = 0; k < z.size(); ++k) {
      if (k) out << ' ';
      out << text::format_real17(z[k]);
    }
    out << '\n';
  }
}

inline LatentModel read_model(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || text::trim(line) != kModelMagic)
    throw ModelFormatError(1, "expected '" + std::string(kModelMagic) + "'");
  if (!std::getline(in, line)) throw ModelFormatError(2, "missing header");

  std::optional<Variant> variant;
  std::optional<std::size_t> dim, n_users;
  std::optional<double> tau;
  bool tau_seen = false;
  for (auto field : text::split(text::trim(line), ' ')) {
    const auto eq = field.find('=');
    if (eq == std::string_view::npos) throw ModelFormatError(2, "malformed field '" + std::string(field) + "'");
    const auto key = field.substr(0, eq);
    const auto value = field.substr(eq + 1);
    if (key == "variant") {
      if (value == "CDK") variant = Variant::CDK;
      else if (value == "CDKT") variant = Variant::CDKT;
      else throw ModelFormatError(2, "unknown variant '" + std::string(value) + "'");
    } else if (key == "dim") {
      dim = text::parse_int<std::size_t>(value);
      if (!dim || *dim == 0) throw ModelFormatError(2, "invalid dim");
    } else if (key == "users") {
      n_users = text::parse_int<std::size_t>(value);
      if (!n_users) throw ModelFormatError(2, "invalid users");
    } else if (key == "tau") {
      tau_seen = true;
      if (value != "none") {
        tau = text::parse_real(value);
        if (!tau) throw ModelFormatError(2, "invalid tau");
      }
    } else {
      throw ModelFormatError(2, "unknown field '" + std::string(key) + "'");
    }
  }
  if (!variant || !dim || !n_users || !tau_seen) throw ModelFormatError(2, "incomplete header");
  if ((*variant == Variant::CDKT) != tau.has_value())
    throw ModelFormatError(2, "tau must be present iff variant=CDKT");

  std::vector<std::string> ids;
  std::vector<std::vector<double>> rows;
  std::size_t line_no = 2;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw ModelFormatError(line_no, "expected '<user_id>\\t<values>'");
    const std::string_view id = std::string_view(line).substr(0, tab);
    if (!text::is_valid_id(id)) throw ModelFormatError(line_no, "invalid user id");
    std::vector<double> row;
    for (auto tok : text::split(std::string_view(line).substr(tab + 1), ' ')) {
      auto v = text::parse_real(tok);
      if (!v) throw ModelFormatError(line_no, "invalid value '" + std::string(tok) + "'");
      row.push_back(*v);
    }
    if (row.size() != *dim)
      throw ModelFormatError(line_no, "expected " + std::to_string(*dim) + " values, got " + std::to_string(row.size()));
    ids.emplace_back(id);
    rows.push_back(std::move(row));
  }
  if (ids.size() != *n_users)
    throw ModelFormatError(line_no, "expected " + std::to_string(*n_users) + " users, got " + std::to_string(ids.size()));

  UserTable table(ids);
  if (table.size() != ids.size()) throw ModelFormatError(line_no, "duplicate user ids");
  LatentModel model(std::move(table), *dim, *variant, tau);
  for (std::size_t r = 0; r < ids.size(); ++r) {
    auto z = model.embedding(model.users().at(ids[r]));
    std::copy(rows[r].begin(), rows[r].end(), z.begin());
  }
  return model;
}

}  // namespace cdkt
