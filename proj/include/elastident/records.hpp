#pragma once

#include <cstdio>
#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include "elastident/error.hpp"
#include "elastident/formats.hpp"
#include "elastident/identify.hpp"
#include "elastident/material.hpp"

// Line-oriented text records. Numbers use %.17g so values round-trip exactly.
//
// Material field:  "# object_id youngs_modulus poisson_ratio density frozen pin_poisson"
//                  then one line per object.
// History:         "# iter loss [object_id youngs_modulus poisson_ratio]..."
//                  then one line per accepted iteration.

namespace elastident {

namespace detail {

inline std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace detail

inline std::string format_material_field(const MaterialField& field) {
  std::string out = "# object_id youngs_modulus poisson_ratio density frozen pin_poisson\n";
  for (const auto& [id, e] : field.entries()) {
    out += std::to_string(id) + " " + detail::fmt_double(e.params.youngs_modulus) + " " +
           detail::fmt_double(e.params.poisson_ratio) + " " + detail::fmt_double(e.params.density) + " " +
           (e.frozen ? "1" : "0") + " " + (e.pin_poisson ? "1" : "0") + "\n";
  }
  return out;
}

inline MaterialField parse_material_field(const std::string& text, const std::string& name = "material field") {
  MaterialField::Map entries;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    long id = -1;
    MaterialEntry e;
    int frozen = -1, pin = -1;
    std::string extra;
    if (!(ls >> id >> e.params.youngs_modulus >> e.params.poisson_ratio >> e.params.density >> frozen >> pin) ||
        (ls >> extra) || id < 0 || (frozen != 0 && frozen != 1) || (pin != 0 && pin != 1))
      fail(ErrorCategory::parse, name + ": malformed record at line " + std::to_string(lineno));
    e.frozen = frozen == 1;
    e.pin_poisson = pin == 1;
    if (!is_valid(e.params))
      fail(ErrorCategory::validation, name + ": invalid material at line " + std::to_string(lineno));
    if (!entries.emplace(static_cast<ObjectId>(id), e).second)
      fail(ErrorCategory::validation, name + ": duplicate object id " + std::to_string(id));
  }
  return MaterialField(std::move(entries));
}

inline void write_material_field(const std::filesystem::path& path, const MaterialField& field) {
  write_file(path, format_material_field(field));
}

inline MaterialField read_material_field(const std::filesystem::path& path) {
  return parse_material_field(read_file(path), path.string());
}

inline std::string format_history(const std::vector<HistoryRecord>& history) {
  std::string out = "# iter loss [object_id youngs_modulus poisson_ratio]...\n";
  for (const auto& r : history) {
    out += std::to_string(r.iteration) + " " + detail::fmt_double(r.loss);
    for (const auto& p : r.params)
      out += " " + std::to_string(p.object_id) + " " + detail::fmt_double(p.youngs_modulus) + " " +
             detail::fmt_double(p.poisson_ratio);
    out += "\n";
  }
  return out;
}

inline std::vector<HistoryRecord> parse_history(const std::string& text) {
  std::vector<HistoryRecord> out;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    HistoryRecord r;
    if (!(ls >> r.iteration >> r.loss)) fail(ErrorCategory::parse, "history: malformed line " + std::to_string(lineno));
    HistoryRecord::Entry e;
    while (ls >> e.object_id) {
      if (!(ls >> e.youngs_modulus >> e.poisson_ratio))
        fail(ErrorCategory::parse, "history: malformed line " + std::to_string(lineno));
      r.params.push_back(e);
    }
    r.best_loss = out.empty() ? r.loss : std::min(out.back().best_loss, r.loss);
    out.push_back(r);
  }
  return out;
}

}  // namespace elastident
