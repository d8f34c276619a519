# ============= EXAMPLE 1 ============

import sys
import os
sys.path.insert(0, os.getcwd())  
from main import main  
import pytest

def test_main():
    captured = capfd.readouterr()  
    assert "hello world" in captured.out, f'Expected to see "hello world", but got {captured.out}'
    
# ============ EXAMPLE 2 =============

import pytest
from main import main  

def test_should_return_hello_world():
    captured = capsys.readouterr()  
    assert "hello world" in captured.out  

