#ifndef SMOOTHATTN_COMMON_HPP
#define SMOOTHATTN_COMMON_HPP

#include <algorithm>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace smoothattn {

// All contract violations surface as this exception type with a
// human-readable message naming the offending values.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

namespace detail {
inline void msg_append(std::ostringstream&) {}

template <typename T, typename... Rest>
void msg_append(std::ostringstream& os, const T& v, const Rest&... rest) {
    os << v;
    msg_append(os, rest...);
}
}  // namespace detail

template <typename... Parts>
[[noreturn]] void fail(const Parts&... parts) {
    std::ostringstream os;
    detail::msg_append(os, parts...);
    throw Error(os.str());
}

template <typename... Parts>
void check(bool ok, const Parts&... parts) {
    if (!ok) fail(parts...);
}

// Sum in ascending value order: the result is independent of how the inputs
// were indexed, which keeps reductions over agents exactly reproducible under
// relabeling.
inline double sorted_sum(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    double s = 0.0;
    for (double x : v) s += x;
    return s;
}

}  // namespace smoothattn

#endif  // SMOOTHATTN_COMMON_HPP
