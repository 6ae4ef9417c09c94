#include <cmath>
#include <memory>
#include <numbers>

#include <nlohmann/json.hpp>

#include "tki/error.hpp"
#include "tki/models.hpp"

namespace tki {

namespace {

using nlohmann::json;

const json& field(const json& doc, const char* name) {
  if (!doc.contains(name)) throw Error(ErrorCode::SchemaError, std::string("missing field '") + name + "'");
  return doc.at(name);
}

int int_field(const json& doc, const char* name) {
  const json& v = field(doc, name);
  if (!v.is_number_integer()) throw Error(ErrorCode::SchemaError, std::string("field '") + name + "' must be an integer");
  return v.get<int>();
}

std::vector<double> number_array(const json& doc, const char* name, std::size_t expected) {
  const json& v = field(doc, name);
  if (!v.is_array()) throw Error(ErrorCode::SchemaError, std::string("field '") + name + "' must be an array");
  if (v.size() != expected) {
    throw Error(ErrorCode::SchemaError, std::string("field '") + name + "' has " + std::to_string(v.size()) +
                                            " entries, expected " + std::to_string(expected));
  }
  std::vector<double> out;
  out.reserve(expected);
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!v[i].is_number()) {
      throw Error(ErrorCode::SchemaError, std::string("field '") + name + "' entry " + std::to_string(i) + " is not a number");
    }
    out.push_back(v[i].get<double>());
  }
  return out;
}

CMatrix unpack(const std::vector<double>& re, const std::vector<double>& im, std::size_t offset, int n) {
  CMatrix m(n, n);
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c) {
      std::size_t i = offset + static_cast<std::size_t>(r * n + c);
      m(r, c) = cplx(re[i], im[i]);
    }
  return m;
}

}  // namespace

BlochModel ingest_sampled(const std::string& json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::SchemaError, std::string("malformed JSON at byte ") + std::to_string(e.byte) + ": " + e.what());
  }
  if (!doc.is_object()) throw Error(ErrorCode::SchemaError, "document must be a JSON object");

  int dim = int_field(doc, "dim");
  if (dim != 2 && dim != 3) throw Error(ErrorCode::SchemaError, "field 'dim' must be 2 or 3");
  const json& sizes_json = field(doc, "sizes");
  if (!sizes_json.is_array() || static_cast<int>(sizes_json.size()) != dim) {
    throw Error(ErrorCode::SchemaError, "field 'sizes' must list one size per axis");
  }
  std::vector<int> sizes;
  for (const auto& s : sizes_json) {
    if (!s.is_number_integer() || s.get<int>() < 2) throw Error(ErrorCode::SchemaError, "field 'sizes' must hold integers >= 2");
    sizes.push_back(s.get<int>());
  }
  BZGrid grid(sizes);  // OddGrid for odd sizes
  int n_bands = int_field(doc, "n_bands");
  int n_occ = int_field(doc, "n_occ");
  if (n_bands < 2 || n_bands % 2 != 0) throw Error(ErrorCode::SchemaError, "field 'n_bands' must be even and positive");
  if (n_occ < 2 || n_occ % 2 != 0 || n_occ >= n_bands) {
    throw Error(ErrorCode::SchemaError, "field 'n_occ' must be even and below n_bands");
  }
  const auto nb2 = static_cast<std::size_t>(n_bands * n_bands);
  auto tr = number_array(doc, "theta_real", nb2);
  auto ti = number_array(doc, "theta_imag", nb2);
  auto hr = number_array(doc, "h_real", nb2 * grid.node_count());
  auto hi = number_array(doc, "h_imag", nb2 * grid.node_count());

  BlochModel model;
  model.name = doc.contains("name") && doc["name"].is_string() ? doc["name"].get<std::string>() : "sampled";
  model.dim = dim;
  model.n_bands = n_bands;
  model.n_occ = n_occ;
  model.theta.U = unpack(tr, ti, 0, n_bands);
  if (kramers_defect(model.theta.U) > 1e-8) {
    throw Error(ErrorCode::SymmetryViolation, "theta is not an antiunitary squaring to -1");
  }
  // Exactly antiunitary operator: snap to the nearest unitary.
  model.theta.U = polar_unitary(model.theta.U);

  auto samples = std::make_shared<std::vector<CMatrix>>(grid.node_count());
  for (NodeIndex i = 0; i < grid.node_count(); ++i) {
    CMatrix h = unpack(hr, hi, i * nb2, n_bands);
    double herm = max_abs(h - h.adjoint());
    if (herm > 1e-8) {
      throw Error(ErrorCode::SymmetryViolation, "node " + std::to_string(i) + " is not Hermitian (" + std::to_string(herm) + ")");
    }
    (*samples)[i] = 0.5 * (h + h.adjoint());
  }
  for (NodeIndex i = 0; i < grid.node_count(); ++i) {
    double r = max_abs(model.theta.conjugate((*samples)[i]) - (*samples)[grid.involution(i)]);
    if (r > 1e-8) {
      throw Error(ErrorCode::SymmetryViolation, "time-reversal residual " + std::to_string(r) + " at node " + std::to_string(i));
    }
  }
  model.params["samples"] = static_cast<double>(grid.node_count());
  model.sampled_grid = grid;
  model.blocks.push_back({{}, n_occ});
  for (int b = 0; b < n_bands; ++b) model.blocks[0].bands.push_back(b);
  model.hamiltonian = [samples, grid](std::span<const double> k) {
    Coords n{0, 0, 0};
    for (int a = 0; a < grid.dim(); ++a) {
      double x = (k[static_cast<std::size_t>(a)] + std::numbers::pi) * grid.size(a) / (2 * std::numbers::pi);
      n[static_cast<std::size_t>(a)] = wrap(static_cast<int>(std::lround(x)), grid.size(a));
    }
    return (*samples)[grid.index(n)];
  };
  return model;
}

std::string export_sampled(const BlochModel& model, const BZGrid& grid) {
  if (model.domain != DomainKind::Torus || grid.dim() != model.dim) {
    throw Error(ErrorCode::IncompatibleGrid, "only torus models can be exported");
  }
  json doc;
  doc["name"] = model.name;
  doc["dim"] = grid.dim();
  doc["sizes"] = grid.sizes();
  doc["n_bands"] = model.n_bands;
  doc["n_occ"] = model.n_occ;
  std::vector<double> tr, ti, hr, hi;
  for (int r = 0; r < model.n_bands; ++r)
    for (int c = 0; c < model.n_bands; ++c) {
      tr.push_back(model.theta.U(r, c).real());
      ti.push_back(model.theta.U(r, c).imag());
    }
  const auto nb2 = static_cast<std::size_t>(model.n_bands * model.n_bands);
  hr.reserve(nb2 * grid.node_count());
  hi.reserve(nb2 * grid.node_count());
  for (NodeIndex i = 0; i < grid.node_count(); ++i) {
    auto k = grid.momentum(i);
    CMatrix h = evaluate(model, std::span<const double>(k.data(), static_cast<std::size_t>(grid.dim())));
    for (int r = 0; r < model.n_bands; ++r)
      for (int c = 0; c < model.n_bands; ++c) {
        hr.push_back(h(r, c).real());
        hi.push_back(h(r, c).imag());
      }
  }
  doc["theta_real"] = tr;
  doc["theta_imag"] = ti;
  doc["h_real"] = hr;
  doc["h_imag"] = hi;
  return doc.dump();
}

}  // namespace tki
