/* Copyright (c) 2026 The sherdmatch Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License. */
#pragma once

#include <cctype>
#include <compare>
#include <string>
#include <string_view>

#include "sherdmatch/errors.hpp"

namespace sherdmatch::shape {

/// Catalogue / page / figure triple from `IDCAT-PAGNUM.FIGID.png`.
struct ProfileId {
  std::string catalogue;
  std::string page;
  std::string figure;

  std::string str() const { return catalogue + "-" + page + "." + figure; }
  std::string filename() const { return str() + ".png"; }

  auto operator<=>(const ProfileId&) const = default;
  bool operator==(const ProfileId&) const = default;
};

namespace detail {

inline bool alnum(std::string_view s) {
  if (s.empty()) return false;
  for (char c : s) {
    if (!std::isalnum(static_cast<unsigned char>(c))) return false;
  }
  return true;
}

}  // namespace detail

/// Parses `IDCAT-PAGNUM.FIGID` with an optional `.png` suffix. Every segment
/// must be a non-empty alphanumeric run.
inline ProfileId parse_profile_id(std::string_view name) {
  const std::string original(name);
  if (name.size() > 4 && name.substr(name.size() - 4) == ".png") name.remove_suffix(4);
  const auto dash = name.find('-');
  if (dash == std::string_view::npos) {
    throw DataError("profile id '" + original + "': missing '-' between catalogue and page");
  }
  const auto cat = name.substr(0, dash);
  if (!detail::alnum(cat)) throw DataError("profile id '" + original + "': bad catalogue segment '" + std::string(cat) + "'");
  const auto rest = name.substr(dash + 1);
  const auto dot = rest.find('.');
  if (dot == std::string_view::npos) {
    throw DataError("profile id '" + original + "': missing '.' between page and figure");
  }
  const auto page = rest.substr(0, dot);
  const auto fig = rest.substr(dot + 1);
  if (!detail::alnum(page)) throw DataError("profile id '" + original + "': bad page segment '" + std::string(page) + "'");
  if (!detail::alnum(fig)) throw DataError("profile id '" + original + "': bad figure segment '" + std::string(fig) + "'");
  return {std::string(cat), std::string(page), std::string(fig)};
}

}  // namespace sherdmatch::shape
