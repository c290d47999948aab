// SPDX-License-Identifier: Apache-2.0
#include "neurograph/errors.hpp"

namespace neurograph {

bool is_validation_error(const Error& e) noexcept {
    const auto& k = e.kind();
    return k == "data" || k == "ingest" || k == "structural" || k == "config" || k == "argument";
}

} // namespace neurograph
