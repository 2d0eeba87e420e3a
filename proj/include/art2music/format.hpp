#pragma once

#include <string>

namespace art2music {

/// Rounds to `digits` significant decimal digits so JSON/CSV output stays byte-stable.
double round_significant(double v, int digits = 9);

/// printf("%.9g") equivalent.
std::string format_g9(double v);

}  // namespace art2music
