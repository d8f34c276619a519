# ============= EXAMPLE 1 ============

import sys
from io import StringIO
import pytest

@pytest.fixture(autouse=True)
def redirect_stdout():
    old_output = sys.stdout
    new_output = StringIO()
    sys.stdout = new_output
    yield  
    sys.stdout = old_output


import hello_world.main as m
def test_main():
    capturedOutput = StringIO()         
    sys.stdout = capturedOutput        
    sys.stdout = sys.__stdout__       
    assert capturedOutput.getvalue().strip() == "hello world" 

# ============= EXAMPLE 2 ============ 

import pytest

import hello_world.main as m
def test_main(capsys):  
    m.main()             
    captured = capsys.readouterr()  
    assert "hello world" in captured.out    

