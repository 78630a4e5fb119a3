// SPDX-License-Identifier: Apache-2.0

#ifndef SYSID_SYSID_HPP
#define SYSID_SYSID_HPP

#include "sysid/bundle.hpp"
#include "sysid/csv.hpp"
#include "sysid/datagen.hpp"
#include "sysid/era.hpp"
#include "sysid/errors.hpp"
#include "sysid/experiments.hpp"
#include "sysid/filtering.hpp"
#include "sysid/inference.hpp"
#include "sysid/integrate.hpp"
#include "sysid/linalg.hpp"
#include "sysid/markov.hpp"
#include "sysid/models.hpp"
#include "sysid/objectives.hpp"
#include "sysid/priors.hpp"
#include "sysid/simulate.hpp"
#include "sysid/types.hpp"

#endif  // SYSID_SYSID_HPP
