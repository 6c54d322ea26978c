// Copyright (C) 2026 The InPose Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "inpose/common.hpp"
#include "inpose/datagen.hpp"
#include "inpose/denoiser.hpp"
#include "inpose/eval.hpp"
#include "inpose/io.hpp"
#include "inpose/measurement.hpp"
#include "inpose/network.hpp"
#include "inpose/rot6d.hpp"
#include "inpose/sampler.hpp"
#include "inpose/skeleton.hpp"
#include "inpose/training.hpp"
#include "inpose/uncertainty.hpp"
