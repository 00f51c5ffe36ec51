// Copyright 2026 The xfnet Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <ostream>

namespace xfnet {

/// The xfnet command line: train, eval, gradcheck, shapes, synth, ablate.
/// Returns the process exit code; diagnostics go to `err`. Files are only
/// written through temporary siblings renamed on success.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace xfnet
