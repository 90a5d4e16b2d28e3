#pragma once

#include <string>
#include <string_view>

#include "duetml/error.hpp"

namespace duetml::detail {

struct SplitUrl {
  std::string base;  // scheme://host[:port]
  std::string path;  // starts with '/'
};

inline SplitUrl split_url(std::string_view url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string_view::npos)
    throw Error(ErrorCode::BadRequest, "url without scheme: " + std::string(url));
  const auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string_view::npos) return {std::string(url), "/"};
  return {std::string(url.substr(0, path_start)), std::string(url.substr(path_start))};
}

}  // namespace duetml::detail
