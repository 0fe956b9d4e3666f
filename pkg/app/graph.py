#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
LangGraph pipeline of one experiment: load -> split -> train -> [importance] -> summarize
Every stage routes to the error handler once the state carries an error.
"""

from typing import Callable, Dict

from langgraph.graph import END, StateGraph

from .graph_state import ExperimentState
from .nodes import n_error_handler, n_importance, n_load, n_split, n_summarize, n_train_runs

ERROR = "error_handler"


def _then(next_step: str) -> Callable[[ExperimentState], str]:
    def route(state: ExperimentState) -> str:
        return ERROR if state.has_error() else next_step
    route.__name__ = f"route_to_{next_step}"
    return route


def route_after_train(state: ExperimentState) -> str:
    """Importance profiles only exist when the config asks for them"""
    if state.has_error():
        return ERROR
    return "importance" if state.config.importance_enabled else "summarize"


def _targets(*steps: str) -> Dict[str, str]:
    return {**{s: s for s in steps}, ERROR: ERROR}


def build_graph():
    """Build and compile the experiment workflow"""
    graph = StateGraph(ExperimentState)

    graph.add_node("load", n_load)
    graph.add_node("split", n_split)
    graph.add_node("train", n_train_runs)
    graph.add_node("importance", n_importance)
    graph.add_node("summarize", n_summarize)
    graph.add_node(ERROR, n_error_handler)

    graph.set_entry_point("load")

    graph.add_conditional_edges("load", _then("split"), _targets("split"))
    graph.add_conditional_edges("split", _then("train"), _targets("train"))
    graph.add_conditional_edges("train", route_after_train, _targets("importance", "summarize"))
    graph.add_conditional_edges("importance", _then("summarize"), _targets("summarize"))
    graph.add_conditional_edges("summarize", _then("end"), {"end": END, ERROR: ERROR})

    graph.add_edge(ERROR, END)
    return graph.compile()


# Global graph instance
GRAPH = build_graph()
