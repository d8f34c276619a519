import pytest

import hello_world.main as m
def test_main(capsys):  
    m.main()             
    captured = capsys.readouterr()  
    assert "hello world" in captured.out    
