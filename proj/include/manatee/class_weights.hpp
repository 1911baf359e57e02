// Copyright 2026 The Manatee AST Authors
// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

namespace manatee {

// Per-class multipliers of the cross-entropy terms.
struct ClassWeights {
  double positive = 1.0;
  double negative = 1.0;
  friend bool operator==(const ClassWeights&, const ClassWeights&) = default;
};

}  // namespace manatee
