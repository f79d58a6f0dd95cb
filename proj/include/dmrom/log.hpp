// Copyright 2026 The dmrom Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <string>

namespace dmrom {

using WarningSink = std::function<void(const std::string&)>;

// Installs a process-wide warning sink; an empty sink restores stderr output.
void set_warning_sink(WarningSink sink);

void warn(const std::string& message);

}  // namespace dmrom
