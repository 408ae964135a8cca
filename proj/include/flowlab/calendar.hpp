#pragma once

#include <chrono>
#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace flowlab {

using Date = std::chrono::sys_days;
using Index = std::ptrdiff_t;

// ISO-8601 calendar date (YYYY-MM-DD). Throws ValidationError on malformed input.
Date parse_date(std::string_view text);
std::string format_date(Date d);

bool is_weekday(Date d);

// `count` consecutive Monday-Friday dates starting at the first weekday >= start.
std::vector<Date> business_days(Date start, std::size_t count);

}  // namespace flowlab
