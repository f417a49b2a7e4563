// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The pogmdm Authors

#pragma once

#include "pogmdm/coil_prior.hpp"
#include "pogmdm/config.hpp"
#include "pogmdm/core/fft.hpp"
#include "pogmdm/core/image.hpp"
#include "pogmdm/core/parallel.hpp"
#include "pogmdm/core/random.hpp"
#include "pogmdm/io.hpp"
#include "pogmdm/metrics.hpp"
#include "pogmdm/mri.hpp"
#include "pogmdm/prior.hpp"
#include "pogmdm/sampler.hpp"
#include "pogmdm/shearlet.hpp"
#include "pogmdm/training.hpp"
