#pragma once

#include <lkca/binio.hpp>
#include <lkca/error.hpp>
#include <lkca/gradcheck.hpp>
#include <lkca/hsi_io.hpp>
#include <lkca/losses.hpp>
#include <lkca/lowrank.hpp>
#include <lkca/metrics.hpp>
#include <lkca/model.hpp>
#include <lkca/ops.hpp>
#include <lkca/parallel.hpp>
#include <lkca/random.hpp>
#include <lkca/resample.hpp>
#include <lkca/svd.hpp>
#include <lkca/tensor.hpp>
#include <lkca/train.hpp>
