#pragma once

#include "auction.hpp"
#include "capacity.hpp"
#include "core.hpp"
#include "mediator.hpp"
#include "scenario.hpp"
