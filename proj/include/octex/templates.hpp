#pragma once

#include "octex/default_templates.hpp"
#include "octex/layout.hpp"

namespace octex {

// The shipped Cirrus OU templates, parsed once.
inline const LayoutTemplate& default_template(ReportKind kind) {
  static const LayoutTemplate rnfl = load_template(templates::kCirrusRnflOu);
  static const LayoutTemplate gcc = load_template(templates::kCirrusGccOu);
  return kind == ReportKind::Rnfl ? rnfl : gcc;
}

}  // namespace octex
